//! RV64IMC decoding, encoding and jump-reach arithmetic.
//!
//! Only the integer subset is supported. Floating-point, vector and the
//! less common system encodings decode to [`Kind::Unknown`] with the
//! correct width, which keeps them out of every patch window.

mod decode;
mod encode;

pub use decode::decode;
pub use encode::{encode, to_bytes};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Register index, 0..=31.
pub type Reg = u8;

/// ABI register indices used throughout the patcher.
pub mod reg {
    use super::Reg;

    pub const ZERO: Reg = 0;
    pub const RA: Reg = 1;
    pub const SP: Reg = 2;
    pub const T0: Reg = 5;
    pub const T2: Reg = 7;
    pub const A0: Reg = 10;
    pub const A1: Reg = 11;
    pub const A2: Reg = 12;
    pub const A7: Reg = 17;
    pub const S2: Reg = 18;
    pub const S3: Reg = 19;
    pub const S4: Reg = 20;
    pub const S5: Reg = 21;
    pub const S6: Reg = 22;
    pub const S7: Reg = 23;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IsaError {
    #[error("truncated code: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("{what} offset {offset:#x} out of range")]
    OutOfRange { what: &'static str, offset: i64 },
}

/// Fine-grained operation, one variant per supported encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    Lui,
    Auipc,
    Jal,
    Jalr,
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
    Lb,
    Lh,
    Lw,
    Ld,
    Lbu,
    Lhu,
    Lwu,
    Sb,
    Sh,
    Sw,
    Sd,
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
    Addiw,
    Slliw,
    Srliw,
    Sraiw,
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    Addw,
    Subw,
    Sllw,
    Srlw,
    Sraw,
    Mul,
    Mulh,
    Mulhsu,
    Mulhu,
    Div,
    Divu,
    Rem,
    Remu,
    Mulw,
    Divw,
    Divuw,
    Remw,
    Remuw,
    Fence,
    FenceI,
    Ecall,
    Ebreak,
    Csrrw,
    Csrrs,
    Csrrc,
    Csrrwi,
    Csrrsi,
    Csrrci,
    // RVC quadrant 0
    CAddi4spn,
    CLw,
    CLd,
    CSw,
    CSd,
    // RVC quadrant 1
    CNop,
    CAddi,
    CAddiw,
    CLi,
    CAddi16sp,
    CLui,
    CSrli,
    CSrai,
    CAndi,
    CSub,
    CXor,
    COr,
    CAnd,
    CSubw,
    CAddw,
    CJ,
    CBeqz,
    CBnez,
    // RVC quadrant 2
    CSlli,
    CLwsp,
    CLdsp,
    CJr,
    CMv,
    CEbreak,
    CJalr,
    CAdd,
    CSwsp,
    CSdsp,
    Unknown,
}

/// Coarse operation class, the granularity planner and analysis care about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpClass {
    Alu,
    AluImm,
    Load,
    Store,
    Lui,
    Auipc,
    Jal,
    Jalr,
    Branch,
    Ecall,
    Ebreak,
    Fence,
    Csr,
    CompressedAlu,
    CompressedAluImm,
    CompressedLoad,
    CompressedStore,
    CompressedLui,
    CompressedJump,
    CompressedJumpReg,
    CompressedBranch,
    CompressedEbreak,
    Unknown,
}

/// One decoded instruction. `raw` keeps the original bits (low 16 only
/// significant for compressed forms); immediates are sign-extended to 64
/// bits at decode time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub raw: u32,
    pub width: u8,
    pub kind: Kind,
    pub rd: Reg,
    pub rs1: Reg,
    pub rs2: Reg,
    pub imm: i64,
}

impl Instruction {
    pub fn opclass(&self) -> OpClass {
        use Kind::*;
        match self.kind {
            Lui => OpClass::Lui,
            Auipc => OpClass::Auipc,
            Jal => OpClass::Jal,
            Jalr => OpClass::Jalr,
            Beq | Bne | Blt | Bge | Bltu | Bgeu => OpClass::Branch,
            Lb | Lh | Lw | Ld | Lbu | Lhu | Lwu => OpClass::Load,
            Sb | Sh | Sw | Sd => OpClass::Store,
            Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai | Addiw | Slliw
            | Srliw | Sraiw => OpClass::AluImm,
            Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And | Addw | Subw | Sllw
            | Srlw | Sraw | Mul | Mulh | Mulhsu | Mulhu | Div | Divu | Rem | Remu | Mulw
            | Divw | Divuw | Remw | Remuw => OpClass::Alu,
            Fence | FenceI => OpClass::Fence,
            Ecall => OpClass::Ecall,
            Ebreak => OpClass::Ebreak,
            Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => OpClass::Csr,
            CAddi4spn | CNop | CAddi | CAddiw | CLi | CAddi16sp | CSrli | CSrai | CAndi
            | CSlli => OpClass::CompressedAluImm,
            CSub | CXor | COr | CAnd | CSubw | CAddw | CMv | CAdd => OpClass::CompressedAlu,
            CLw | CLd | CLwsp | CLdsp => OpClass::CompressedLoad,
            CSw | CSd | CSwsp | CSdsp => OpClass::CompressedStore,
            CLui => OpClass::CompressedLui,
            CJ => OpClass::CompressedJump,
            CJr | CJalr => OpClass::CompressedJumpReg,
            CBeqz | CBnez => OpClass::CompressedBranch,
            CEbreak => OpClass::CompressedEbreak,
            Unknown => OpClass::Unknown,
        }
    }

    pub fn is_compressed(&self) -> bool {
        self.width == 2
    }

    /// Re-encode from the decoded fields. Unknown encodings return the
    /// original raw bits.
    pub fn reencode(&self) -> u32 {
        if self.kind == Kind::Unknown {
            if self.width == 2 {
                self.raw & 0xffff
            } else {
                self.raw
            }
        } else {
            encode(self.kind, self.rd, self.rs1, self.rs2, self.imm)
        }
    }

    /// True when the instruction can execute unchanged at a different
    /// address: no pc-relative semantics and no environment transfer.
    /// Fences and CSR accesses are conservatively excluded.
    pub fn is_relocatable(&self) -> bool {
        matches!(
            self.opclass(),
            OpClass::Alu
                | OpClass::AluImm
                | OpClass::Load
                | OpClass::Store
                | OpClass::Lui
                | OpClass::CompressedAlu
                | OpClass::CompressedAluImm
                | OpClass::CompressedLoad
                | OpClass::CompressedStore
                | OpClass::CompressedLui
        )
    }

    /// Statically resolvable direct control transfer, if any:
    /// `(target_offset)` relative to this instruction's address.
    pub fn direct_target_offset(&self) -> Option<i64> {
        match self.kind {
            Kind::Jal | Kind::Beq | Kind::Bne | Kind::Blt | Kind::Bge | Kind::Bltu
            | Kind::Bgeu | Kind::CJ | Kind::CBeqz | Kind::CBnez => Some(self.imm),
            _ => None,
        }
    }

    /// Register written by the instruction, if any.
    pub fn dest_reg(&self) -> Option<Reg> {
        use Kind::*;
        match self.kind {
            Sb | Sh | Sw | Sd | CSw | CSd | CSwsp | CSdsp | Beq | Bne | Blt | Bge | Bltu
            | Bgeu | CBeqz | CBnez | CJ | Fence | FenceI | Ecall | Ebreak | CEbreak
            | Unknown => None,
            CJr => None,
            CJalr => Some(reg::RA),
            Kind::CNop => None,
            _ => {
                if self.rd == 0 {
                    None
                } else {
                    Some(self.rd)
                }
            }
        }
    }
}

/// Reach of the two jump idioms, in signed byte offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpReach {
    Jal,
    AuipcJalr,
}

impl JumpReach {
    pub fn min_offset(self) -> i64 {
        match self {
            JumpReach::Jal => JAL_MIN_OFFSET,
            JumpReach::AuipcJalr => AUIPC_JALR_MIN_OFFSET,
        }
    }

    pub fn max_offset(self) -> i64 {
        match self {
            JumpReach::Jal => JAL_MAX_OFFSET,
            JumpReach::AuipcJalr => AUIPC_JALR_MAX_OFFSET,
        }
    }
}

/// jal: 21-bit signed even immediate.
pub const JAL_MIN_OFFSET: i64 = -1_048_576;
pub const JAL_MAX_OFFSET: i64 = 1_048_574;

/// auipc+jalr: the 2's-complement bias makes the range asymmetric.
pub const AUIPC_JALR_MIN_OFFSET: i64 = -0x8000_0800;
pub const AUIPC_JALR_MAX_OFFSET: i64 = 0x7fff_f7fe;

pub fn jal_in_range(from_pc: u64, target: u64) -> bool {
    let delta = target.wrapping_sub(from_pc) as i64;
    (JAL_MIN_OFFSET..=JAL_MAX_OFFSET).contains(&delta) && delta % 2 == 0
}

pub fn auipc_jalr_in_range(from_pc: u64, target: u64) -> bool {
    let delta = target.wrapping_sub(from_pc) as i64;
    (AUIPC_JALR_MIN_OFFSET..=AUIPC_JALR_MAX_OFFSET).contains(&delta)
}

/// Encode `jal link, target - from_pc` as a 4-byte word.
pub fn encode_jal(link: Reg, from_pc: u64, target: u64) -> Result<u32, IsaError> {
    if !jal_in_range(from_pc, target) {
        return Err(IsaError::OutOfRange {
            what: "jal",
            offset: target.wrapping_sub(from_pc) as i64,
        });
    }
    let offset = target.wrapping_sub(from_pc) as i64;
    Ok(encode(Kind::Jal, link, 0, 0, offset))
}

/// Encode `auipc scratch, hi` + `jalr scratch, lo(scratch)`. The pair
/// transfers control to `target` and leaves the address of the second
/// instruction plus 4 in `scratch` (the jalr link).
pub fn encode_auipc_jalr_pair(
    scratch: Reg,
    from_pc: u64,
    target: u64,
) -> Result<[u32; 2], IsaError> {
    if !auipc_jalr_in_range(from_pc, target) {
        return Err(IsaError::OutOfRange {
            what: "auipc+jalr",
            offset: target.wrapping_sub(from_pc) as i64,
        });
    }
    let delta = target.wrapping_sub(from_pc) as i64;
    let mut lo = delta & 0xfff;
    if lo >= 0x800 {
        lo -= 0x1000;
    }
    let hi = (delta - lo) >> 12;
    let auipc = encode(Kind::Auipc, scratch, 0, 0, hi << 12);
    let jalr = encode(Kind::Jalr, scratch, scratch, 0, lo);
    Ok([auipc, jalr])
}

/// Immediate of a constant `li`-style setter for `target_reg`
/// (`addi reg, x0, imm` or `c.li reg, imm` with a non-negative immediate).
pub fn extract_register_setter_immediate(insn: &Instruction, target_reg: Reg) -> Option<u64> {
    match insn.kind {
        Kind::Addi if insn.rd == target_reg && insn.rs1 == reg::ZERO && insn.imm >= 0 => {
            Some(insn.imm as u64)
        }
        Kind::CLi if insn.rd == target_reg && insn.imm >= 0 => Some(insn.imm as u64),
        _ => None,
    }
}

// Small assembler helpers used by codegen and the corpus generator.

pub fn asm_addi(rd: Reg, rs1: Reg, imm: i64) -> u32 {
    encode(Kind::Addi, rd, rs1, 0, imm)
}

pub fn asm_ld(rd: Reg, rs1: Reg, imm: i64) -> u32 {
    encode(Kind::Ld, rd, rs1, 0, imm)
}

pub fn asm_sd(rs2: Reg, rs1: Reg, imm: i64) -> u32 {
    encode(Kind::Sd, 0, rs1, rs2, imm)
}

pub fn asm_ecall() -> u32 {
    encode(Kind::Ecall, 0, 0, 0, 0)
}

pub fn asm_ebreak() -> u32 {
    encode(Kind::Ebreak, 0, 0, 0, 0)
}

pub fn asm_auipc(rd: Reg, imm_hi: i64) -> u32 {
    encode(Kind::Auipc, rd, 0, 0, imm_hi << 12)
}

pub fn asm_c_addi(rd: Reg, imm: i64) -> u16 {
    encode(Kind::CAddi, rd, rd, 0, imm) as u16
}

pub fn asm_c_sdsp(rs2: Reg, offset: i64) -> u16 {
    encode(Kind::CSdsp, 0, reg::SP, rs2, offset) as u16
}

pub fn asm_c_ldsp(rd: Reg, offset: i64) -> u16 {
    encode(Kind::CLdsp, rd, reg::SP, 0, offset) as u16
}

#[cfg(test)]
mod tests;
