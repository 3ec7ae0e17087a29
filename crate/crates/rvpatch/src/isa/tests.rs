use proptest::prelude::*;

use super::*;

fn d32(raw: u32) -> Instruction {
    decode(&raw.to_le_bytes()).unwrap()
}

fn d16(raw: u16) -> Instruction {
    decode(&raw.to_le_bytes()).unwrap()
}

#[test]
fn decode_ecall_and_ebreak() {
    let i = d32(0x0000_0073);
    assert_eq!(i.kind, Kind::Ecall);
    assert_eq!(i.width, 4);
    let i = d32(0x0010_0073);
    assert_eq!(i.kind, Kind::Ebreak);
}

#[test]
fn decode_li_a7() {
    // addi a7, x0, 64
    let i = d32(0x0400_0893);
    assert_eq!(i.kind, Kind::Addi);
    assert_eq!(i.rd, reg::A7);
    assert_eq!(i.rs1, reg::ZERO);
    assert_eq!(i.imm, 64);
    assert_eq!(extract_register_setter_immediate(&i, reg::A7), Some(64));
}

#[test]
fn decode_compressed_edge_cases() {
    // 0x0000 is the defined illegal encoding; 0x0001 is c.nop.
    let i = d16(0x0000);
    assert_eq!(i.kind, Kind::Unknown);
    assert_eq!(i.width, 2);
    let i = d16(0x0001);
    assert_eq!(i.kind, Kind::CNop);
    assert_eq!(i.width, 2);
}

#[test]
fn setter_extraction_rules() {
    // c.li a7, 21 (5-bit window keeps it small)
    let cli = encode(Kind::CLi, reg::A7, 0, 0, 21);
    let i = d16(cli as u16);
    assert_eq!(i.kind, Kind::CLi);
    assert_eq!(extract_register_setter_immediate(&i, reg::A7), Some(21));
    // addi a7, a7, 1 is not a constant setter
    let i = d32(asm_addi(reg::A7, reg::A7, 1));
    assert_eq!(extract_register_setter_immediate(&i, reg::A7), None);
    // addi a7, s7, 0: register-sourced, not constant
    let i = d32(asm_addi(reg::A7, reg::S7, 0));
    assert_eq!(extract_register_setter_immediate(&i, reg::A7), None);
}

#[test]
fn jal_reach_is_exact_at_the_boundaries() {
    let pc = 0x8000_0000u64;
    // Scan ±8 bytes around both limits: only in-range even offsets pass.
    for delta in -8i64..=8 {
        let max_t = pc.wrapping_add((JAL_MAX_OFFSET + delta) as u64);
        let expect = delta <= 0 && (JAL_MAX_OFFSET + delta) % 2 == 0;
        assert_eq!(jal_in_range(pc, max_t), expect, "max+{delta}");
        let min_t = pc.wrapping_add((JAL_MIN_OFFSET + delta) as u64);
        let expect = delta >= 0 && (JAL_MIN_OFFSET + delta) % 2 == 0;
        assert_eq!(jal_in_range(pc, min_t), expect, "min+{delta}");
    }
}

#[test]
fn auipc_jalr_reach_is_exact_at_the_boundaries() {
    let pc = 0x4000_0000u64;
    assert!(auipc_jalr_in_range(
        pc,
        pc.wrapping_add(AUIPC_JALR_MIN_OFFSET as u64)
    ));
    assert!(!auipc_jalr_in_range(
        pc,
        pc.wrapping_add((AUIPC_JALR_MIN_OFFSET - 1) as u64)
    ));
    assert!(auipc_jalr_in_range(
        pc,
        pc.wrapping_add(AUIPC_JALR_MAX_OFFSET as u64)
    ));
    assert!(!auipc_jalr_in_range(
        pc,
        pc.wrapping_add((AUIPC_JALR_MAX_OFFSET + 1) as u64)
    ));
    // The naive symmetric bound over-promises on the positive side.
    assert!(!auipc_jalr_in_range(pc, pc.wrapping_add(0x7fff_f800)));
    assert!(auipc_jalr_in_range(pc, pc.wrapping_add(0x7fff_f7fe)));
}

#[test]
fn encode_jal_round_trips() {
    for (from, target) in [
        (0x1000u64, 0x1800u64),
        (0x1000, 0x800),
        (0x10_0000, 0x10_0000 + JAL_MAX_OFFSET as u64),
        (0x20_0000, 0x20_0000u64.wrapping_add(JAL_MIN_OFFSET as u64)),
    ] {
        let word = encode_jal(reg::RA, from, target).unwrap();
        let i = d32(word);
        assert_eq!(i.kind, Kind::Jal);
        assert_eq!(i.rd, reg::RA);
        assert_eq!(from.wrapping_add(i.imm as u64), target);
    }
    assert!(encode_jal(reg::RA, 0x1000, 0x1001).is_err());
    assert!(encode_jal(reg::RA, 0x1000, 0x1000 + JAL_MAX_OFFSET as u64 + 2).is_err());
}

#[test]
fn auipc_jalr_pair_lands_exactly() {
    // Emulate the pair symbolically for offsets around the lo-half sign
    // boundary and at the extremes.
    let from = 0x4000_0000u64;
    let mut offsets = vec![
        0i64,
        4,
        -4,
        0x7fe,
        0x800,
        0x802,
        -0x800,
        -0x802,
        0x12_3456,
        -0x12_3456,
        AUIPC_JALR_MIN_OFFSET,
        AUIPC_JALR_MAX_OFFSET,
    ];
    // jalr clears bit 0 of the target, so only even offsets are exact.
    offsets.extend((-20..20).map(|d| d * 6));
    for off in offsets {
        let target = from.wrapping_add(off as u64);
        let [auipc, jalr] = encode_auipc_jalr_pair(reg::T0, from, target).unwrap();
        let a = d32(auipc);
        let j = d32(jalr);
        assert_eq!(a.kind, Kind::Auipc);
        assert_eq!(j.kind, Kind::Jalr);
        let t0 = from.wrapping_add(a.imm as u64);
        let landed = t0.wrapping_add(j.imm as u64) & !1;
        assert_eq!(landed, target, "offset {off:#x}");
    }
    assert!(encode_auipc_jalr_pair(reg::T0, from, from.wrapping_add(0x7fff_f800)).is_err());
}

#[test]
fn relocatability_matches_opclass_policy() {
    // pc-relative, control flow and environment ops must stay put.
    for raw in [
        0x0000_0097u32, // auipc ra, 0
        0x0000_006f,    // jal x0, 0
        0x0000_8067,    // jalr x0, 0(ra)
        0x0000_0063,    // beq x0, x0, 0
        0x0000_0073,    // ecall
        0x0010_0073,    // ebreak
        0x0000_000f,    // fence
        0x1000_2573,    // csrrs
    ] {
        assert!(!d32(raw).is_relocatable(), "{raw:#010x}");
    }
    for raw in [
        0x0400_0893u32, // addi a7, x0, 64
        0x0000_0513,    // addi a0, x0, 0
        0x0000_3503,    // ld a0, 0(x0)
        0x0000_3023,    // sd x0, 0(x0)
        0x0000_05b7,    // lui a1, 0
        0x02b5_0533,    // mul a0, a0, a1
    ] {
        assert!(d32(raw).is_relocatable(), "{raw:#010x}");
    }
}

proptest! {
    /// decode→reencode is the identity on the significant bits.
    #[test]
    fn decode_reencode_round_trip_32(raw in any::<u32>()) {
        // Force a 4-byte encoding (low two bits set).
        let raw = raw | 0b11;
        if (raw & 0b11100) == 0b11100 {
            // 48-bit+ encodings are out of scope.
            return Ok(());
        }
        let i = d32(raw);
        if i.kind != Kind::Unknown {
            prop_assert_eq!(i.reencode(), raw);
        }
    }

    #[test]
    fn decode_reencode_round_trip_16(raw in any::<u16>()) {
        let raw = if raw & 0b11 == 0b11 { raw & !0b10 } else { raw };
        let i = d16(raw);
        prop_assert_eq!(i.width, 2);
        if i.kind != Kind::Unknown {
            prop_assert_eq!(i.reencode() as u16, raw);
        }
    }

    /// Every decoded width-4 instruction advances by 4, width-2 by 2.
    #[test]
    fn widths_follow_the_low_bits(raw in any::<u32>()) {
        if let Ok(i) = decode(&raw.to_le_bytes()) {
            if raw & 0b11 == 0b11 {
                prop_assert_eq!(i.width, 4);
            } else {
                prop_assert_eq!(i.width, 2);
            }
        }
    }
}
