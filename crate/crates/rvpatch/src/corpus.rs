//! Seeded synthetic program generator.
//!
//! Produces self-contained RV64 programs with a controlled mix of
//! syscall-site shapes: wide straight-line sites that take a full
//! gateway patch, medium sites, tightly clamped sites that only fit the
//! single-jump form, and sites with a dynamic syscall number that cannot
//! be patched at all. Generation is deterministic per seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emulator::SYSCALL_EXIT;
use crate::image::{self, CodeImage};
use crate::isa::{self, encode, Kind};
use crate::planner::PatchKind;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("infeasible spec: {reason}")]
    Infeasible { reason: String },
}

/// What the generator intended for a site; the planner should agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntendedKind {
    Gateway,
    Middle,
    Small,
    Unpatchable,
}

impl IntendedKind {
    pub fn as_patch_kind(self) -> Option<PatchKind> {
        match self {
            IntendedKind::Gateway => Some(PatchKind::Gateway),
            IntendedKind::Middle => Some(PatchKind::Middle),
            IntendedKind::Small => Some(PatchKind::Small),
            IntendedKind::Unpatchable => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteAnnotation {
    pub ecall_address: u64,
    pub intended: IntendedKind,
    /// Runtime syscall number (what a7 holds at the ecall).
    pub syscall_number: u64,
    /// Statically extractable, i.e. set by a constant `li`.
    pub static_number: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub sites: usize,
    /// Percentages, must sum to 100.
    pub gateway_pct: u32,
    pub middle_pct: u32,
    pub small_pct: u32,
    pub unpatchable_pct: u32,
    pub rvc: bool,
    pub seed: u64,
    pub base: u64,
    /// Pool for non-exit sites; exit-family numbers are filtered out.
    pub syscall_numbers: Vec<u64>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            sites: 20,
            gateway_pct: 40,
            middle_pct: 45,
            small_pct: 15,
            unpatchable_pct: 0,
            rvc: true,
            seed: 0,
            base: 0x1_0000,
            syscall_numbers: vec![17, 29, 57, 63, 64, 98, 220, 435],
        }
    }
}

/// Largest-remainder apportionment of `total` over the percentages.
fn apportion(total: usize, pcts: [u32; 4]) -> [usize; 4] {
    let mut counts = [0usize; 4];
    let mut rems: Vec<(u32, usize)> = Vec::new();
    let mut assigned = 0;
    for (i, pct) in pcts.iter().enumerate() {
        let exact = total as u64 * *pct as u64;
        counts[i] = (exact / 100) as usize;
        assigned += counts[i];
        rems.push(((exact % 100) as u32, i));
    }
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, i) in rems.iter().cycle().take(total - assigned) {
        counts[*i] += 1;
    }
    counts
}

struct Asm {
    bytes: Vec<u8>,
    base: u64,
}

impl Asm {
    fn pc(&self) -> u64 {
        self.base + self.bytes.len() as u64
    }

    fn put32(&mut self, word: u32) {
        self.bytes.extend_from_slice(&word.to_le_bytes());
    }

    fn put16(&mut self, half: u16) {
        self.bytes.extend_from_slice(&half.to_le_bytes());
    }

    /// Window fence: `auipc t2, 0` is position-dependent, so analysis
    /// never extends a window across it, yet it executes identically in
    /// the original and patched runs (it is never displaced).
    fn fence(&mut self) {
        self.put32(isa::asm_auipc(isa::reg::T2, 0));
    }

    fn li(&mut self, rd: u8, imm: i64) {
        self.put32(isa::asm_addi(rd, isa::reg::ZERO, imm));
    }

    /// One random 4-byte relocatable filler over the sandbox registers.
    fn filler(&mut self, rng: &mut ChaCha8Rng) {
        let sregs = [isa::reg::S3, isa::reg::S4, isa::reg::S5, isa::reg::S6];
        let rd = *sregs.choose(rng).unwrap();
        let rs1 = *sregs.choose(rng).unwrap();
        let rs2 = *sregs.choose(rng).unwrap();
        let word = match rng.gen_range(0..4) {
            0 => isa::asm_addi(rd, rs1, rng.gen_range(-64..64)),
            1 => encode(Kind::Add, rd, rs1, rs2, 0),
            2 => encode(Kind::Xor, rd, rs1, rs2, 0),
            _ => encode(Kind::And, rd, rs1, rs2, 0),
        };
        self.put32(word);
    }
}

/// Generate one program. The last site is always a patchable exit so
/// both the original and patched runs terminate cleanly.
pub fn generate(spec: &CorpusSpec) -> Result<(CodeImage, Vec<SiteAnnotation>), CorpusError> {
    if spec.sites == 0 {
        return Err(CorpusError::Infeasible {
            reason: "need at least one site".into(),
        });
    }
    if spec.gateway_pct + spec.middle_pct + spec.small_pct + spec.unpatchable_pct != 100 {
        return Err(CorpusError::Infeasible {
            reason: "percentages must sum to 100".into(),
        });
    }
    let counts = apportion(
        spec.sites,
        [
            spec.gateway_pct,
            spec.middle_pct,
            spec.small_pct,
            spec.unpatchable_pct,
        ],
    );
    if counts[0] == 0 && counts[1] + counts[2] > 0 {
        return Err(CorpusError::Infeasible {
            reason: "middle/small sites need at least one gateway".into(),
        });
    }
    let pool: Vec<u64> = spec
        .syscall_numbers
        .iter()
        .copied()
        .filter(|n| !crate::emulator::is_exit_family(*n))
        .collect();
    if pool.is_empty() {
        return Err(CorpusError::Infeasible {
            reason: "syscall number pool is empty".into(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Site kind sequence, shuffled, with a patchable kind forced last.
    let mut kinds: Vec<IntendedKind> = Vec::with_capacity(spec.sites);
    for (kind, n) in [
        (IntendedKind::Gateway, counts[0]),
        (IntendedKind::Middle, counts[1]),
        (IntendedKind::Small, counts[2]),
        (IntendedKind::Unpatchable, counts[3]),
    ] {
        kinds.extend(std::iter::repeat_n(kind, n));
    }
    kinds.shuffle(&mut rng);
    if kinds[spec.sites - 1] == IntendedKind::Unpatchable {
        let swap = kinds
            .iter()
            .position(|k| *k != IntendedKind::Unpatchable)
            .ok_or_else(|| CorpusError::Infeasible {
                reason: "all sites unpatchable: program cannot exit through a patch".into(),
            })?;
        kinds.swap(swap, spec.sites - 1);
    }

    let mut asm = Asm {
        bytes: Vec::new(),
        base: spec.base,
    };
    let mut annotations = Vec::with_capacity(spec.sites);

    // Prologue: sandbox registers. s2 stays 1 (never-taken-branch guard),
    // s7 carries a dynamic syscall number for unpatchable sites.
    asm.li(isa::reg::S2, 1);
    asm.li(isa::reg::S3, rng.gen_range(0..1000));
    asm.li(isa::reg::S4, rng.gen_range(0..1000));
    asm.li(isa::reg::S5, rng.gen_range(0..1000));
    asm.li(isa::reg::S6, rng.gen_range(0..1000));
    let dynamic_number = *pool.choose(&mut rng).unwrap();
    asm.li(isa::reg::S7, dynamic_number as i64);

    let mut small_serial = 0usize;
    for (i, kind) in kinds.iter().enumerate() {
        let last = i == spec.sites - 1;
        let number = if last {
            SYSCALL_EXIT
        } else {
            *pool.choose(&mut rng).unwrap()
        };
        // Per-site syscall arguments, outside any window.
        asm.li(isa::reg::A0, rng.gen_range(0..2048));
        asm.li(isa::reg::A1, rng.gen_range(0..2048));

        let (ecall_address, static_number) = match kind {
            IntendedKind::Gateway => {
                asm.fence();
                // Wide straight-line site: enough relocatable context on
                // both sides for the largest patch form.
                for _ in 0..3 {
                    asm.filler(&mut rng);
                }
                asm.li(isa::reg::A7, number as i64);
                let at = asm.pc();
                asm.put32(isa::asm_ecall());
                asm.filler(&mut rng);
                asm.filler(&mut rng);
                if !spec.rvc {
                    asm.filler(&mut rng);
                }
                asm.fence();
                (at, true)
            }
            IntendedKind::Middle => {
                asm.li(isa::reg::A7, number as i64);
                asm.fence();
                asm.filler(&mut rng);
                if !spec.rvc {
                    asm.filler(&mut rng);
                }
                let at = asm.pc();
                asm.put32(isa::asm_ecall());
                asm.filler(&mut rng);
                asm.fence();
                (at, true)
            }
            IntendedKind::Small => {
                asm.li(isa::reg::A7, number as i64);
                asm.fence();
                let variant = if spec.rvc { small_serial % 3 } else { 1 + small_serial % 2 };
                small_serial += 1;
                let at = match variant {
                    0 => {
                        // Tightest shape: a lone compressed instruction
                        // before the ecall, six usable bytes in total.
                        asm.put16(encode(Kind::CMv, isa::reg::S3, 0, isa::reg::S4, 0) as u16);
                        let at = asm.pc();
                        asm.put32(isa::asm_ecall());
                        asm.fence();
                        at
                    }
                    1 => {
                        let at = asm.pc();
                        asm.put32(isa::asm_ecall());
                        asm.filler(&mut rng);
                        asm.fence();
                        at
                    }
                    _ => {
                        // Post side clamped by an incoming (never-taken)
                        // branch landing right after the ecall.
                        asm.filler(&mut rng);
                        let at = asm.pc();
                        asm.put32(isa::asm_ecall());
                        asm.filler(&mut rng);
                        asm.fence();
                        let offset = (at + 4).wrapping_sub(asm.pc()) as i64;
                        asm.put32(encode(Kind::Beq, 0, isa::reg::ZERO, isa::reg::S2, offset));
                        at
                    }
                };
                (at, true)
            }
            IntendedKind::Unpatchable => {
                // a7 comes from a register, so the number is not static
                // and the narrow window rules out every patch form.
                asm.fence();
                asm.put32(isa::asm_addi(isa::reg::A7, isa::reg::S7, 0));
                let at = asm.pc();
                asm.put32(isa::asm_ecall());
                asm.fence();
                (at, false)
            }
        };
        annotations.push(SiteAnnotation {
            ecall_address,
            intended: *kind,
            syscall_number: if *kind == IntendedKind::Unpatchable {
                dynamic_number
            } else {
                number
            },
            static_number,
        });
    }

    let image = image::load_raw(asm.bytes, spec.base).expect("generated image is well-formed");
    Ok((image, annotations))
}
