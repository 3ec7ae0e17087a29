//! Instruction encoding, the inverse of [`super::decode`].

use super::{Kind, Reg};

fn r_type(opcode: u32, funct3: u32, funct7: u32, rd: Reg, rs1: Reg, rs2: Reg) -> u32 {
    opcode
        | ((rd as u32) << 7)
        | (funct3 << 12)
        | ((rs1 as u32) << 15)
        | ((rs2 as u32) << 20)
        | (funct7 << 25)
}

fn i_type(opcode: u32, funct3: u32, rd: Reg, rs1: Reg, imm: i64) -> u32 {
    opcode
        | ((rd as u32) << 7)
        | (funct3 << 12)
        | ((rs1 as u32) << 15)
        | (((imm as u32) & 0xfff) << 20)
}

fn s_type(opcode: u32, funct3: u32, rs1: Reg, rs2: Reg, imm: i64) -> u32 {
    let imm = imm as u32;
    opcode
        | ((imm & 0x1f) << 7)
        | (funct3 << 12)
        | ((rs1 as u32) << 15)
        | ((rs2 as u32) << 20)
        | (((imm >> 5) & 0x7f) << 25)
}

fn b_type(opcode: u32, funct3: u32, rs1: Reg, rs2: Reg, imm: i64) -> u32 {
    let imm = imm as u32;
    opcode
        | (((imm >> 11) & 1) << 7)
        | (((imm >> 1) & 0xf) << 8)
        | (funct3 << 12)
        | ((rs1 as u32) << 15)
        | ((rs2 as u32) << 20)
        | (((imm >> 5) & 0x3f) << 25)
        | (((imm >> 12) & 1) << 31)
}

fn u_type(opcode: u32, rd: Reg, imm: i64) -> u32 {
    opcode | ((rd as u32) << 7) | ((imm as u32) & 0xffff_f000)
}

fn j_type(opcode: u32, rd: Reg, imm: i64) -> u32 {
    let imm = imm as u32;
    opcode
        | ((rd as u32) << 7)
        | (((imm >> 12) & 0xff) << 12)
        | (((imm >> 11) & 1) << 20)
        | (((imm >> 1) & 0x3ff) << 21)
        | (((imm >> 20) & 1) << 31)
}

fn shift64(funct6: u32, funct3: u32, rd: Reg, rs1: Reg, shamt: i64) -> u32 {
    0x13 | ((rd as u32) << 7)
        | (funct3 << 12)
        | ((rs1 as u32) << 15)
        | (((shamt as u32) & 0x3f) << 20)
        | (funct6 << 26)
}

// Compressed helpers. `cr` registers are the x8..x15 window.
fn c_reg(r: Reg) -> u32 {
    debug_assert!((8..16).contains(&r));
    (r as u32) - 8
}

fn bitv(imm: i64, i: u32) -> u32 {
    ((imm >> i) & 1) as u32
}

fn bitsv(imm: i64, hi: u32, lo: u32) -> u32 {
    ((imm >> lo) & ((1 << (hi - lo + 1)) - 1)) as u32
}

/// Encode an instruction from its decoded fields. Compressed forms come
/// back in the low 16 bits. Panics on operands a given kind cannot
/// represent; callers validate ranges first.
pub fn encode(kind: Kind, rd: Reg, rs1: Reg, rs2: Reg, imm: i64) -> u32 {
    use Kind::*;
    match kind {
        Lui => u_type(0x37, rd, imm),
        Auipc => u_type(0x17, rd, imm),
        Jal => j_type(0x6f, rd, imm),
        Jalr => i_type(0x67, 0, rd, rs1, imm),
        Beq => b_type(0x63, 0, rs1, rs2, imm),
        Bne => b_type(0x63, 1, rs1, rs2, imm),
        Blt => b_type(0x63, 4, rs1, rs2, imm),
        Bge => b_type(0x63, 5, rs1, rs2, imm),
        Bltu => b_type(0x63, 6, rs1, rs2, imm),
        Bgeu => b_type(0x63, 7, rs1, rs2, imm),
        Lb => i_type(0x03, 0, rd, rs1, imm),
        Lh => i_type(0x03, 1, rd, rs1, imm),
        Lw => i_type(0x03, 2, rd, rs1, imm),
        Ld => i_type(0x03, 3, rd, rs1, imm),
        Lbu => i_type(0x03, 4, rd, rs1, imm),
        Lhu => i_type(0x03, 5, rd, rs1, imm),
        Lwu => i_type(0x03, 6, rd, rs1, imm),
        Sb => s_type(0x23, 0, rs1, rs2, imm),
        Sh => s_type(0x23, 1, rs1, rs2, imm),
        Sw => s_type(0x23, 2, rs1, rs2, imm),
        Sd => s_type(0x23, 3, rs1, rs2, imm),
        Addi => i_type(0x13, 0, rd, rs1, imm),
        Slti => i_type(0x13, 2, rd, rs1, imm),
        Sltiu => i_type(0x13, 3, rd, rs1, imm),
        Xori => i_type(0x13, 4, rd, rs1, imm),
        Ori => i_type(0x13, 6, rd, rs1, imm),
        Andi => i_type(0x13, 7, rd, rs1, imm),
        Slli => shift64(0, 1, rd, rs1, imm),
        Srli => shift64(0, 5, rd, rs1, imm),
        Srai => shift64(0b010000, 5, rd, rs1, imm),
        Addiw => i_type(0x1b, 0, rd, rs1, imm),
        Slliw => r_type(0x1b, 1, 0, rd, rs1, (imm as u8) & 0x1f),
        Srliw => r_type(0x1b, 5, 0, rd, rs1, (imm as u8) & 0x1f),
        Sraiw => r_type(0x1b, 5, 0x20, rd, rs1, (imm as u8) & 0x1f),
        Add => r_type(0x33, 0, 0, rd, rs1, rs2),
        Sub => r_type(0x33, 0, 0x20, rd, rs1, rs2),
        Sll => r_type(0x33, 1, 0, rd, rs1, rs2),
        Slt => r_type(0x33, 2, 0, rd, rs1, rs2),
        Sltu => r_type(0x33, 3, 0, rd, rs1, rs2),
        Xor => r_type(0x33, 4, 0, rd, rs1, rs2),
        Srl => r_type(0x33, 5, 0, rd, rs1, rs2),
        Sra => r_type(0x33, 5, 0x20, rd, rs1, rs2),
        Or => r_type(0x33, 6, 0, rd, rs1, rs2),
        And => r_type(0x33, 7, 0, rd, rs1, rs2),
        Addw => r_type(0x3b, 0, 0, rd, rs1, rs2),
        Subw => r_type(0x3b, 0, 0x20, rd, rs1, rs2),
        Sllw => r_type(0x3b, 1, 0, rd, rs1, rs2),
        Srlw => r_type(0x3b, 5, 0, rd, rs1, rs2),
        Sraw => r_type(0x3b, 5, 0x20, rd, rs1, rs2),
        Mul => r_type(0x33, 0, 1, rd, rs1, rs2),
        Mulh => r_type(0x33, 1, 1, rd, rs1, rs2),
        Mulhsu => r_type(0x33, 2, 1, rd, rs1, rs2),
        Mulhu => r_type(0x33, 3, 1, rd, rs1, rs2),
        Div => r_type(0x33, 4, 1, rd, rs1, rs2),
        Divu => r_type(0x33, 5, 1, rd, rs1, rs2),
        Rem => r_type(0x33, 6, 1, rd, rs1, rs2),
        Remu => r_type(0x33, 7, 1, rd, rs1, rs2),
        Mulw => r_type(0x3b, 0, 1, rd, rs1, rs2),
        Divw => r_type(0x3b, 4, 1, rd, rs1, rs2),
        Divuw => r_type(0x3b, 5, 1, rd, rs1, rs2),
        Remw => r_type(0x3b, 6, 1, rd, rs1, rs2),
        Remuw => r_type(0x3b, 7, 1, rd, rs1, rs2),
        Fence => i_type(0x0f, 0, rd, rs1, imm),
        FenceI => i_type(0x0f, 1, rd, rs1, imm),
        Ecall => 0x0000_0073,
        Ebreak => 0x0010_0073,
        Csrrw => i_type(0x73, 1, rd, rs1, imm),
        Csrrs => i_type(0x73, 2, rd, rs1, imm),
        Csrrc => i_type(0x73, 3, rd, rs1, imm),
        Csrrwi => i_type(0x73, 5, rd, rs1, imm),
        Csrrsi => i_type(0x73, 6, rd, rs1, imm),
        Csrrci => i_type(0x73, 7, rd, rs1, imm),

        CAddi4spn => {
            (bitsv(imm, 5, 4) << 11)
                | (bitsv(imm, 9, 6) << 7)
                | (bitv(imm, 2) << 6)
                | (bitv(imm, 3) << 5)
                | (c_reg(rd) << 2)
        }
        CLw => {
            0x4000
                | (bitsv(imm, 5, 3) << 10)
                | (c_reg(rs1) << 7)
                | (bitv(imm, 2) << 6)
                | (bitv(imm, 6) << 5)
                | (c_reg(rd) << 2)
        }
        CLd => {
            0x6000
                | (bitsv(imm, 5, 3) << 10)
                | (c_reg(rs1) << 7)
                | (bitsv(imm, 7, 6) << 5)
                | (c_reg(rd) << 2)
        }
        CSw => {
            0xc000
                | (bitsv(imm, 5, 3) << 10)
                | (c_reg(rs1) << 7)
                | (bitv(imm, 2) << 6)
                | (bitv(imm, 6) << 5)
                | (c_reg(rs2) << 2)
        }
        CSd => {
            0xe000
                | (bitsv(imm, 5, 3) << 10)
                | (c_reg(rs1) << 7)
                | (bitsv(imm, 7, 6) << 5)
                | (c_reg(rs2) << 2)
        }
        CNop => 0x0001 | (bitv(imm, 5) << 12) | (bitsv(imm, 4, 0) << 2),
        CAddi => {
            0x0001 | (bitv(imm, 5) << 12) | ((rd as u32) << 7) | (bitsv(imm, 4, 0) << 2)
        }
        CAddiw => {
            0x2001 | (bitv(imm, 5) << 12) | ((rd as u32) << 7) | (bitsv(imm, 4, 0) << 2)
        }
        CLi => 0x4001 | (bitv(imm, 5) << 12) | ((rd as u32) << 7) | (bitsv(imm, 4, 0) << 2),
        CAddi16sp => {
            0x6101
                | (bitv(imm, 9) << 12)
                | (bitv(imm, 4) << 6)
                | (bitv(imm, 6) << 5)
                | (bitsv(imm, 8, 7) << 3)
                | (bitv(imm, 5) << 2)
        }
        CLui => {
            0x6001 | (bitv(imm, 17) << 12) | ((rd as u32) << 7) | (bitsv(imm, 16, 12) << 2)
        }
        CSrli => 0x8001 | (bitv(imm, 5) << 12) | (c_reg(rs1) << 7) | (bitsv(imm, 4, 0) << 2),
        CSrai => 0x8401 | (bitv(imm, 5) << 12) | (c_reg(rs1) << 7) | (bitsv(imm, 4, 0) << 2),
        CAndi => 0x8801 | (bitv(imm, 5) << 12) | (c_reg(rs1) << 7) | (bitsv(imm, 4, 0) << 2),
        CSub => 0x8c01 | (c_reg(rd) << 7) | (c_reg(rs2) << 2),
        CXor => 0x8c21 | (c_reg(rd) << 7) | (c_reg(rs2) << 2),
        COr => 0x8c41 | (c_reg(rd) << 7) | (c_reg(rs2) << 2),
        CAnd => 0x8c61 | (c_reg(rd) << 7) | (c_reg(rs2) << 2),
        CSubw => 0x9c01 | (c_reg(rd) << 7) | (c_reg(rs2) << 2),
        CAddw => 0x9c21 | (c_reg(rd) << 7) | (c_reg(rs2) << 2),
        CJ => {
            0xa001
                | (bitv(imm, 11) << 12)
                | (bitv(imm, 4) << 11)
                | (bitsv(imm, 9, 8) << 9)
                | (bitv(imm, 10) << 8)
                | (bitv(imm, 6) << 7)
                | (bitv(imm, 7) << 6)
                | (bitsv(imm, 3, 1) << 3)
                | (bitv(imm, 5) << 2)
        }
        CBeqz | CBnez => {
            let base = if kind == CBeqz { 0xc001 } else { 0xe001 };
            base | (bitv(imm, 8) << 12)
                | (bitsv(imm, 4, 3) << 10)
                | (c_reg(rs1) << 7)
                | (bitsv(imm, 7, 6) << 5)
                | (bitsv(imm, 2, 1) << 3)
                | (bitv(imm, 5) << 2)
        }
        CSlli => 0x0002 | (bitv(imm, 5) << 12) | ((rd as u32) << 7) | (bitsv(imm, 4, 0) << 2),
        CLwsp => {
            0x4002
                | (bitv(imm, 5) << 12)
                | ((rd as u32) << 7)
                | (bitsv(imm, 4, 2) << 4)
                | (bitsv(imm, 7, 6) << 2)
        }
        CLdsp => {
            0x6002
                | (bitv(imm, 5) << 12)
                | ((rd as u32) << 7)
                | (bitsv(imm, 4, 3) << 5)
                | (bitsv(imm, 8, 6) << 2)
        }
        CJr => 0x8002 | ((rs1 as u32) << 7),
        CMv => 0x8002 | ((rd as u32) << 7) | ((rs2 as u32) << 2),
        CEbreak => 0x9002,
        CJalr => 0x9002 | ((rs1 as u32) << 7),
        CAdd => 0x9002 | ((rd as u32) << 7) | ((rs2 as u32) << 2),
        CSwsp => 0xc002 | (bitsv(imm, 5, 2) << 9) | (bitsv(imm, 7, 6) << 7) | ((rs2 as u32) << 2),
        CSdsp => 0xe002 | (bitsv(imm, 5, 3) << 10) | (bitsv(imm, 8, 6) << 7) | ((rs2 as u32) << 2),
        Unknown => panic!("cannot encode an unknown instruction"),
    }
}

/// Little-endian byte form of an encoded instruction given its width.
pub fn to_bytes(raw: u32, width: u8) -> Vec<u8> {
    match width {
        2 => (raw as u16).to_le_bytes().to_vec(),
        4 => raw.to_le_bytes().to_vec(),
        _ => unreachable!(),
    }
}
