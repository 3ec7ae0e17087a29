//! Instruction decoding for the RV64IMC integer subset.

use super::{Instruction, IsaError, Kind};

/// Decode one instruction from a little-endian byte group. At least two
/// bytes must be available; four for uncompressed encodings.
pub fn decode(bytes: &[u8]) -> Result<Instruction, IsaError> {
    if bytes.len() < 2 {
        return Err(IsaError::Truncated {
            need: 2,
            have: bytes.len(),
        });
    }
    let half = u16::from_le_bytes([bytes[0], bytes[1]]);
    if half & 0b11 != 0b11 {
        return Ok(decode16(half));
    }
    if bytes.len() < 4 {
        return Err(IsaError::Truncated {
            need: 4,
            have: bytes.len(),
        });
    }
    let word = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    Ok(decode32(word))
}

fn bit(x: u32, i: u32) -> u32 {
    (x >> i) & 1
}

fn bits(x: u32, hi: u32, lo: u32) -> u32 {
    (x >> lo) & ((1 << (hi - lo + 1)) - 1)
}

fn sext(value: u64, bits: u32) -> i64 {
    let shift = 64 - bits;
    ((value << shift) as i64) >> shift
}

fn insn(raw: u32, width: u8, kind: Kind, rd: u8, rs1: u8, rs2: u8, imm: i64) -> Instruction {
    Instruction {
        raw,
        width,
        kind,
        rd,
        rs1,
        rs2,
        imm,
    }
}

fn unknown(raw: u32, width: u8) -> Instruction {
    insn(raw, width, Kind::Unknown, 0, 0, 0, 0)
}

fn decode32(w: u32) -> Instruction {
    let opcode = w & 0x7f;
    let rd = bits(w, 11, 7) as u8;
    let funct3 = bits(w, 14, 12);
    let rs1 = bits(w, 19, 15) as u8;
    let rs2 = bits(w, 24, 20) as u8;
    let funct7 = bits(w, 31, 25);

    let imm_i = sext(bits(w, 31, 20) as u64, 12);
    let imm_s = sext(((bits(w, 31, 25) << 5) | bits(w, 11, 7)) as u64, 12);
    let imm_b = sext(
        ((bit(w, 31) << 12) | (bit(w, 7) << 11) | (bits(w, 30, 25) << 5) | (bits(w, 11, 8) << 1))
            as u64,
        13,
    );
    let imm_u = sext((bits(w, 31, 12) << 12) as u64, 32);
    let imm_j = sext(
        ((bit(w, 31) << 20)
            | (bits(w, 19, 12) << 12)
            | (bit(w, 20) << 11)
            | (bits(w, 30, 21) << 1)) as u64,
        21,
    );

    match opcode {
        0x37 => insn(w, 4, Kind::Lui, rd, 0, 0, imm_u),
        0x17 => insn(w, 4, Kind::Auipc, rd, 0, 0, imm_u),
        0x6f => insn(w, 4, Kind::Jal, rd, 0, 0, imm_j),
        0x67 if funct3 == 0 => insn(w, 4, Kind::Jalr, rd, rs1, 0, imm_i),
        0x63 => {
            let kind = match funct3 {
                0 => Kind::Beq,
                1 => Kind::Bne,
                4 => Kind::Blt,
                5 => Kind::Bge,
                6 => Kind::Bltu,
                7 => Kind::Bgeu,
                _ => return unknown(w, 4),
            };
            insn(w, 4, kind, 0, rs1, rs2, imm_b)
        }
        0x03 => {
            let kind = match funct3 {
                0 => Kind::Lb,
                1 => Kind::Lh,
                2 => Kind::Lw,
                3 => Kind::Ld,
                4 => Kind::Lbu,
                5 => Kind::Lhu,
                6 => Kind::Lwu,
                _ => return unknown(w, 4),
            };
            insn(w, 4, kind, rd, rs1, 0, imm_i)
        }
        0x23 => {
            let kind = match funct3 {
                0 => Kind::Sb,
                1 => Kind::Sh,
                2 => Kind::Sw,
                3 => Kind::Sd,
                _ => return unknown(w, 4),
            };
            insn(w, 4, kind, 0, rs1, rs2, imm_s)
        }
        0x13 => match funct3 {
            0 => insn(w, 4, Kind::Addi, rd, rs1, 0, imm_i),
            2 => insn(w, 4, Kind::Slti, rd, rs1, 0, imm_i),
            3 => insn(w, 4, Kind::Sltiu, rd, rs1, 0, imm_i),
            4 => insn(w, 4, Kind::Xori, rd, rs1, 0, imm_i),
            6 => insn(w, 4, Kind::Ori, rd, rs1, 0, imm_i),
            7 => insn(w, 4, Kind::Andi, rd, rs1, 0, imm_i),
            1 if bits(w, 31, 26) == 0 => {
                insn(w, 4, Kind::Slli, rd, rs1, 0, bits(w, 25, 20) as i64)
            }
            5 if bits(w, 31, 26) == 0 => {
                insn(w, 4, Kind::Srli, rd, rs1, 0, bits(w, 25, 20) as i64)
            }
            5 if bits(w, 31, 26) == 0b010000 => {
                insn(w, 4, Kind::Srai, rd, rs1, 0, bits(w, 25, 20) as i64)
            }
            _ => unknown(w, 4),
        },
        0x1b => match funct3 {
            0 => insn(w, 4, Kind::Addiw, rd, rs1, 0, imm_i),
            1 if funct7 == 0 => insn(w, 4, Kind::Slliw, rd, rs1, 0, rs2 as i64),
            5 if funct7 == 0 => insn(w, 4, Kind::Srliw, rd, rs1, 0, rs2 as i64),
            5 if funct7 == 0x20 => insn(w, 4, Kind::Sraiw, rd, rs1, 0, rs2 as i64),
            _ => unknown(w, 4),
        },
        0x33 => {
            let kind = match (funct7, funct3) {
                (0, 0) => Kind::Add,
                (0, 1) => Kind::Sll,
                (0, 2) => Kind::Slt,
                (0, 3) => Kind::Sltu,
                (0, 4) => Kind::Xor,
                (0, 5) => Kind::Srl,
                (0, 6) => Kind::Or,
                (0, 7) => Kind::And,
                (0x20, 0) => Kind::Sub,
                (0x20, 5) => Kind::Sra,
                (1, 0) => Kind::Mul,
                (1, 1) => Kind::Mulh,
                (1, 2) => Kind::Mulhsu,
                (1, 3) => Kind::Mulhu,
                (1, 4) => Kind::Div,
                (1, 5) => Kind::Divu,
                (1, 6) => Kind::Rem,
                (1, 7) => Kind::Remu,
                _ => return unknown(w, 4),
            };
            insn(w, 4, kind, rd, rs1, rs2, 0)
        }
        0x3b => {
            let kind = match (funct7, funct3) {
                (0, 0) => Kind::Addw,
                (0, 1) => Kind::Sllw,
                (0, 5) => Kind::Srlw,
                (0x20, 0) => Kind::Subw,
                (0x20, 5) => Kind::Sraw,
                (1, 0) => Kind::Mulw,
                (1, 4) => Kind::Divw,
                (1, 5) => Kind::Divuw,
                (1, 6) => Kind::Remw,
                (1, 7) => Kind::Remuw,
                _ => return unknown(w, 4),
            };
            insn(w, 4, kind, rd, rs1, rs2, 0)
        }
        0x0f => match funct3 {
            0 => insn(w, 4, Kind::Fence, rd, rs1, 0, bits(w, 31, 20) as i64),
            1 => insn(w, 4, Kind::FenceI, rd, rs1, 0, bits(w, 31, 20) as i64),
            _ => unknown(w, 4),
        },
        0x73 => match funct3 {
            0 if rd == 0 && rs1 == 0 && bits(w, 31, 20) == 0 => insn(w, 4, Kind::Ecall, 0, 0, 0, 0),
            0 if rd == 0 && rs1 == 0 && bits(w, 31, 20) == 1 => {
                insn(w, 4, Kind::Ebreak, 0, 0, 0, 0)
            }
            1 => insn(w, 4, Kind::Csrrw, rd, rs1, 0, bits(w, 31, 20) as i64),
            2 => insn(w, 4, Kind::Csrrs, rd, rs1, 0, bits(w, 31, 20) as i64),
            3 => insn(w, 4, Kind::Csrrc, rd, rs1, 0, bits(w, 31, 20) as i64),
            5 => insn(w, 4, Kind::Csrrwi, rd, rs1, 0, bits(w, 31, 20) as i64),
            6 => insn(w, 4, Kind::Csrrsi, rd, rs1, 0, bits(w, 31, 20) as i64),
            7 => insn(w, 4, Kind::Csrrci, rd, rs1, 0, bits(w, 31, 20) as i64),
            _ => unknown(w, 4),
        },
        _ => unknown(w, 4),
    }
}

fn decode16(h: u16) -> Instruction {
    let w = h as u32;
    let op = w & 0b11;
    let funct3 = bits(w, 15, 13);
    let rd_full = bits(w, 11, 7) as u8;
    let rs2_full = bits(w, 6, 2) as u8;
    let rd_c = 8 + bits(w, 4, 2) as u8;
    let rs1_c = 8 + bits(w, 9, 7) as u8;

    match (op, funct3) {
        (0b00, 0b000) => {
            let uimm = (bits(w, 12, 11) << 4)
                | (bits(w, 10, 7) << 6)
                | (bit(w, 6) << 2)
                | (bit(w, 5) << 3);
            if uimm == 0 {
                // includes the canonical all-zero illegal encoding
                return unknown(w, 2);
            }
            insn(w, 2, Kind::CAddi4spn, rd_c, super::reg::SP, 0, uimm as i64)
        }
        (0b00, 0b010) => {
            let uimm = (bits(w, 12, 10) << 3) | (bit(w, 6) << 2) | (bit(w, 5) << 6);
            insn(w, 2, Kind::CLw, rd_c, rs1_c, 0, uimm as i64)
        }
        (0b00, 0b011) => {
            let uimm = (bits(w, 12, 10) << 3) | (bits(w, 6, 5) << 6);
            insn(w, 2, Kind::CLd, rd_c, rs1_c, 0, uimm as i64)
        }
        (0b00, 0b110) => {
            let uimm = (bits(w, 12, 10) << 3) | (bit(w, 6) << 2) | (bit(w, 5) << 6);
            insn(w, 2, Kind::CSw, 0, rs1_c, rd_c, uimm as i64)
        }
        (0b00, 0b111) => {
            let uimm = (bits(w, 12, 10) << 3) | (bits(w, 6, 5) << 6);
            insn(w, 2, Kind::CSd, 0, rs1_c, rd_c, uimm as i64)
        }
        (0b01, 0b000) => {
            let imm = sext(((bit(w, 12) << 5) | bits(w, 6, 2)) as u64, 6);
            if rd_full == 0 {
                insn(w, 2, Kind::CNop, 0, 0, 0, imm)
            } else {
                insn(w, 2, Kind::CAddi, rd_full, rd_full, 0, imm)
            }
        }
        (0b01, 0b001) => {
            if rd_full == 0 {
                return unknown(w, 2);
            }
            let imm = sext(((bit(w, 12) << 5) | bits(w, 6, 2)) as u64, 6);
            insn(w, 2, Kind::CAddiw, rd_full, rd_full, 0, imm)
        }
        (0b01, 0b010) => {
            let imm = sext(((bit(w, 12) << 5) | bits(w, 6, 2)) as u64, 6);
            insn(w, 2, Kind::CLi, rd_full, 0, 0, imm)
        }
        (0b01, 0b011) => {
            if rd_full == 2 {
                let imm = sext(
                    ((bit(w, 12) << 9)
                        | (bit(w, 6) << 4)
                        | (bit(w, 5) << 6)
                        | (bits(w, 4, 3) << 7)
                        | (bit(w, 2) << 5)) as u64,
                    10,
                );
                if imm == 0 {
                    return unknown(w, 2);
                }
                insn(w, 2, Kind::CAddi16sp, 2, 2, 0, imm)
            } else {
                let imm = sext(((bit(w, 12) << 17) | (bits(w, 6, 2) << 12)) as u64, 18);
                if imm == 0 {
                    return unknown(w, 2);
                }
                insn(w, 2, Kind::CLui, rd_full, 0, 0, imm)
            }
        }
        (0b01, 0b100) => {
            let shamt = ((bit(w, 12) << 5) | bits(w, 6, 2)) as i64;
            match bits(w, 11, 10) {
                0b00 => insn(w, 2, Kind::CSrli, rs1_c, rs1_c, 0, shamt),
                0b01 => insn(w, 2, Kind::CSrai, rs1_c, rs1_c, 0, shamt),
                0b10 => {
                    let imm = sext(((bit(w, 12) << 5) | bits(w, 6, 2)) as u64, 6);
                    insn(w, 2, Kind::CAndi, rs1_c, rs1_c, 0, imm)
                }
                _ => {
                    let rs2 = 8 + bits(w, 4, 2) as u8;
                    let kind = match (bit(w, 12), bits(w, 6, 5)) {
                        (0, 0b00) => Kind::CSub,
                        (0, 0b01) => Kind::CXor,
                        (0, 0b10) => Kind::COr,
                        (0, 0b11) => Kind::CAnd,
                        (1, 0b00) => Kind::CSubw,
                        (1, 0b01) => Kind::CAddw,
                        _ => return unknown(w, 2),
                    };
                    insn(w, 2, kind, rs1_c, rs1_c, rs2, 0)
                }
            }
        }
        (0b01, 0b101) => {
            let imm = sext(
                ((bit(w, 12) << 11)
                    | (bit(w, 11) << 4)
                    | (bits(w, 10, 9) << 8)
                    | (bit(w, 8) << 10)
                    | (bit(w, 7) << 6)
                    | (bit(w, 6) << 7)
                    | (bits(w, 5, 3) << 1)
                    | (bit(w, 2) << 5)) as u64,
                12,
            );
            insn(w, 2, Kind::CJ, 0, 0, 0, imm)
        }
        (0b01, 0b110) | (0b01, 0b111) => {
            let imm = sext(
                ((bit(w, 12) << 8)
                    | (bits(w, 11, 10) << 3)
                    | (bits(w, 6, 5) << 6)
                    | (bits(w, 4, 3) << 1)
                    | (bit(w, 2) << 5)) as u64,
                9,
            );
            let kind = if funct3 == 0b110 { Kind::CBeqz } else { Kind::CBnez };
            insn(w, 2, kind, 0, rs1_c, 0, imm)
        }
        (0b10, 0b000) => {
            let shamt = ((bit(w, 12) << 5) | bits(w, 6, 2)) as i64;
            insn(w, 2, Kind::CSlli, rd_full, rd_full, 0, shamt)
        }
        (0b10, 0b010) => {
            if rd_full == 0 {
                return unknown(w, 2);
            }
            let uimm = (bit(w, 12) << 5) | (bits(w, 6, 4) << 2) | (bits(w, 3, 2) << 6);
            insn(w, 2, Kind::CLwsp, rd_full, super::reg::SP, 0, uimm as i64)
        }
        (0b10, 0b011) => {
            if rd_full == 0 {
                return unknown(w, 2);
            }
            let uimm = (bit(w, 12) << 5) | (bits(w, 6, 5) << 3) | (bits(w, 4, 2) << 6);
            insn(w, 2, Kind::CLdsp, rd_full, super::reg::SP, 0, uimm as i64)
        }
        (0b10, 0b100) => match (bit(w, 12), rd_full, rs2_full) {
            (0, 0, _) => unknown(w, 2),
            (0, rs1, 0) => insn(w, 2, Kind::CJr, 0, rs1, 0, 0),
            (0, rd, rs2) => insn(w, 2, Kind::CMv, rd, 0, rs2, 0),
            (1, 0, 0) => insn(w, 2, Kind::CEbreak, 0, 0, 0, 0),
            (1, rs1, 0) => insn(w, 2, Kind::CJalr, 0, rs1, 0, 0),
            (1, rd, rs2) => insn(w, 2, Kind::CAdd, rd, rd, rs2, 0),
            _ => unknown(w, 2),
        },
        (0b10, 0b110) => {
            let uimm = (bits(w, 12, 9) << 2) | (bits(w, 8, 7) << 6);
            insn(w, 2, Kind::CSwsp, 0, super::reg::SP, rs2_full, uimm as i64)
        }
        (0b10, 0b111) => {
            let uimm = (bits(w, 12, 10) << 3) | (bits(w, 9, 7) << 6);
            insn(w, 2, Kind::CSdsp, 0, super::reg::SP, rs2_full, uimm as i64)
        }
        _ => unknown(w, 2),
    }
}
