//! Static analysis over a code image: ecall discovery, maximal
//! relocatable patch windows and syscall-number extraction.
//!
//! Decoding is a linear sweep from the image base; the corpus generator
//! guarantees no data-in-text, and real libc text is close enough for
//! the purposes of window statistics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::image::CodeImage;
use crate::isa::{self, decode, Instruction, Kind, OpClass};

/// One decoded instruction with its address, as produced by the sweep.
#[derive(Debug, Clone, Copy)]
pub struct Located {
    pub address: u64,
    pub insn: Instruction,
}

/// Linear-sweep decode of the whole image.
pub fn sweep(image: &CodeImage) -> Vec<Located> {
    let mut out = Vec::new();
    let mut off = 0usize;
    while off < image.bytes.len() {
        let insn = match decode(&image.bytes[off..]) {
            Ok(i) => i,
            // trailing 2 bytes that look like a 4-byte instruction
            Err(_) => break,
        };
        out.push(Located {
            address: image.base + off as u64,
            insn,
        });
        off += insn.width as usize;
    }
    out
}

/// An ecall found by the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcallSite {
    pub address: u64,
    pub index: usize,
}

/// All ecall addresses in ascending order.
pub fn scan_ecalls(image: &CodeImage) -> Vec<EcallSite> {
    sweep(image)
        .iter()
        .filter(|l| l.insn.kind == Kind::Ecall)
        .enumerate()
        .map(|(index, l)| EcallSite {
            address: l.address,
            index,
        })
        .collect()
}

/// Targets of every direct jump and branch in the image, plus the image
/// base. Relocated code must never be entered mid-patch, so windows and
/// backward scans stop at these.
pub fn collect_branch_targets(image: &CodeImage) -> BTreeSet<u64> {
    let mut targets = BTreeSet::new();
    targets.insert(image.base);
    for l in sweep(image) {
        if let Some(offset) = l.insn.direct_target_offset() {
            let target = l.address.wrapping_add(offset as u64);
            if image.contains(target) {
                targets.insert(target);
            }
        }
    }
    targets
}

/// Maximal contiguous relocatable region around one ecall.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchWindow {
    pub site: EcallSite,
    pub start: u64,
    pub end: u64,
    pub pre_instructions: Vec<Instruction>,
    pub post_instructions: Vec<Instruction>,
}

impl PatchWindow {
    pub fn usable_bytes(&self) -> u64 {
        self.end - self.start
    }
}

/// Grow the window outward from the ecall while instructions stay
/// relocatable and no interior address (other than the window start) is
/// a branch target.
pub fn compute_window(
    image: &CodeImage,
    site: EcallSite,
    branch_targets: &BTreeSet<u64>,
) -> PatchWindow {
    let insns = sweep(image);
    let ecall_idx = insns
        .iter()
        .position(|l| l.address == site.address && l.insn.kind == Kind::Ecall)
        .expect("site comes from scan_ecalls");

    // Pre side: adding the instruction before the current start makes the
    // old start interior, so the old start must not be a branch target.
    let mut lo = ecall_idx;
    while lo > 0 {
        let cand = insns[lo - 1];
        if !cand.insn.is_relocatable() {
            break;
        }
        if branch_targets.contains(&insns[lo].address) {
            break;
        }
        lo -= 1;
    }

    // Post side: adding the next instruction makes its address interior.
    let mut hi = ecall_idx; // inclusive index of last window instruction
    while hi + 1 < insns.len() {
        let cand = insns[hi + 1];
        if !cand.insn.is_relocatable() {
            break;
        }
        if branch_targets.contains(&cand.address) {
            break;
        }
        hi += 1;
    }

    let start = insns[lo].address;
    let end = insns[hi].address + insns[hi].insn.width as u64;
    PatchWindow {
        site,
        start,
        end,
        pre_instructions: insns[lo..ecall_idx].iter().map(|l| l.insn).collect(),
        post_instructions: insns[ecall_idx + 1..=hi].iter().map(|l| l.insn).collect(),
    }
}

/// Statically extracted syscall number for one site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyscallNumberFact {
    pub site: EcallSite,
    pub value: Option<u64>,
    pub setter_address: Option<u64>,
}

/// Walk backward from the ecall within the straight-line region: stop at
/// control flow or a non-constant a7 write; crossing a branch target is
/// unsafe because other paths join there.
pub fn extract_syscall_number(
    image: &CodeImage,
    site: EcallSite,
    branch_targets: &BTreeSet<u64>,
) -> SyscallNumberFact {
    let insns = sweep(image);
    let ecall_idx = insns
        .iter()
        .position(|l| l.address == site.address && l.insn.kind == Kind::Ecall)
        .expect("site comes from scan_ecalls");

    let mut idx = ecall_idx;
    while idx > 0 {
        idx -= 1;
        let l = insns[idx];
        let cls = l.insn.opclass();
        let is_control_flow = matches!(
            cls,
            OpClass::Jal
                | OpClass::Jalr
                | OpClass::Branch
                | OpClass::Ecall
                | OpClass::Ebreak
                | OpClass::CompressedJump
                | OpClass::CompressedJumpReg
                | OpClass::CompressedBranch
                | OpClass::CompressedEbreak
                | OpClass::Unknown
        );
        if is_control_flow {
            break;
        }
        if l.insn.dest_reg() == Some(isa::reg::A7) {
            return match isa::extract_register_setter_immediate(&l.insn, isa::reg::A7) {
                Some(value) => SyscallNumberFact {
                    site,
                    value: Some(value),
                    setter_address: Some(l.address),
                },
                None => SyscallNumberFact {
                    site,
                    value: None,
                    setter_address: None,
                },
            };
        }
        // Everything before a join point may be skipped on other paths.
        if branch_targets.contains(&l.address) {
            break;
        }
    }
    SyscallNumberFact {
        site,
        value: None,
        setter_address: None,
    }
}
