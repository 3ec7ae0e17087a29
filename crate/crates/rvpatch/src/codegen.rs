//! Patch-region byte emission and runtime blob construction.
//!
//! Every patch replaces its carved region with a redirect sequence whose
//! jump link value doubles as the patch's identification key. Control
//! converges on a single shared trampoline and entry blob; per-patch
//! state lives in a fixed-stride relocated-block table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emulator::{LinkRegister, PatchDispatchInfo};
use crate::image::{self, BlobPlacement, CodeImage, ImageError};
use crate::isa;
use crate::planner::{Plan, PatchKind, PlannedPatch, UnpatchableReason};

/// Offsets inside the runtime blob, relative to its base.
pub const TRAMPOLINE_OFFSET: u64 = 0;
pub const ENTRY_OFFSET: u64 = 16;
pub const ENTRY_LENGTH: u64 = 128;
pub const BLOCK_TABLE_OFFSET: u64 = 192;
pub const BLOCK_STRIDE: u64 = 64;

/// The entry gate sits after the 31 context-save stores.
pub const ENTRY_GATE_OFFSET: u64 = ENTRY_OFFSET + ENTRY_LENGTH - 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodegenError {
    #[error("patch at {site:#x}: {what} target {target:#x} out of reach from {from:#x}")]
    OutOfReach {
        site: u64,
        what: &'static str,
        from: u64,
        target: u64,
    },
    #[error("patch at {site:#x} needs a gateway but has none assigned")]
    MissingGateway { site: u64 },
    #[error("relocated block for patch at {site:#x} exceeds {stride}-byte stride")]
    BlockOverflow { site: u64, stride: u64 },
    #[error(transparent)]
    Image(#[from] ImageError),
}

fn push32(out: &mut Vec<u8>, word: u32) {
    out.extend_from_slice(&word.to_le_bytes());
}

fn push16(out: &mut Vec<u8>, half: u16) {
    out.extend_from_slice(&half.to_le_bytes());
}

/// `addi sp, sp, -16` + save of `reg` at 0(sp), compressed when allowed.
fn emit_push_frame(out: &mut Vec<u8>, reg: isa::Reg, rvc: bool) {
    if rvc {
        push16(out, isa::asm_c_addi(isa::reg::SP, -16));
        push16(out, isa::asm_c_sdsp(reg, 0));
    } else {
        push32(out, isa::asm_addi(isa::reg::SP, isa::reg::SP, -16));
        push32(out, isa::asm_sd(reg, isa::reg::SP, 0));
    }
}

fn emit_pop_frame(out: &mut Vec<u8>, reg: isa::Reg, rvc: bool) {
    if rvc {
        push16(out, isa::asm_c_ldsp(reg, 0));
        push16(out, isa::asm_c_addi(isa::reg::SP, 16));
    } else {
        push32(out, isa::asm_ld(reg, isa::reg::SP, 0));
        push32(out, isa::asm_addi(isa::reg::SP, isa::reg::SP, 16));
    }
}

/// Gateway patch: push a t0 frame, then auipc+jalr to the trampoline.
/// The jalr link in t0 is the key. 16 bytes compressed, 24 otherwise.
pub fn emit_gateway_patch(
    patch: &PlannedPatch,
    runtime_base: u64,
    rvc: bool,
) -> Result<Vec<u8>, CodegenError> {
    let mut out = Vec::new();
    emit_push_frame(&mut out, isa::reg::T0, rvc);
    let auipc_pc = patch.region_start + out.len() as u64;
    let pair = isa::encode_auipc_jalr_pair(isa::reg::T0, auipc_pc, runtime_base).map_err(|_| {
        CodegenError::OutOfReach {
            site: patch.site.address,
            what: "auipc+jalr",
            from: auipc_pc,
            target: runtime_base,
        }
    })?;
    push32(&mut out, pair[0]);
    push32(&mut out, pair[1]);
    // In-patch epilogue: unreachable (the relocated block restores the
    // frame before returning past the region), kept for the byte budget.
    emit_pop_frame(&mut out, isa::reg::T0, rvc);
    debug_assert_eq!(out.len() as u64, patch.region_length);
    Ok(out)
}

/// Middle patch: push an ra frame, then jal ra to the nearest gateway.
/// The jal link in ra is the key. 12 bytes compressed, 16 otherwise
/// (the uncompressed form truncates the dead epilogue to fit).
pub fn emit_middle_patch(
    patch: &PlannedPatch,
    gateway_start: u64,
    rvc: bool,
) -> Result<Vec<u8>, CodegenError> {
    let mut out = Vec::new();
    emit_push_frame(&mut out, isa::reg::RA, rvc);
    let jal_pc = patch.region_start + out.len() as u64;
    let jal = isa::encode_jal(isa::reg::RA, jal_pc, gateway_start).map_err(|_| {
        CodegenError::OutOfReach {
            site: patch.site.address,
            what: "jal",
            from: jal_pc,
            target: gateway_start,
        }
    })?;
    push32(&mut out, jal);
    if rvc {
        push16(&mut out, isa::asm_c_ldsp(isa::reg::RA, 0));
        push16(&mut out, isa::asm_c_addi(isa::reg::SP, 16));
    } else {
        push32(&mut out, isa::asm_ld(isa::reg::RA, isa::reg::SP, 0));
    }
    debug_assert_eq!(out.len() as u64, patch.region_length);
    Ok(out)
}

/// Small patch: a single `jal a7, gateway`; the link in a7 is the key
/// and the statically known syscall number is re-materialized host-side.
pub fn emit_small_patch(
    patch: &PlannedPatch,
    gateway_start: u64,
) -> Result<Vec<u8>, CodegenError> {
    let jal = isa::encode_jal(isa::reg::A7, patch.region_start, gateway_start).map_err(|_| {
        CodegenError::OutOfReach {
            site: patch.site.address,
            what: "jal",
            from: patch.region_start,
            target: gateway_start,
        }
    })?;
    let mut out = Vec::new();
    push32(&mut out, jal);
    Ok(out)
}

/// Per-patch sidecar record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchRecord {
    pub id: usize,
    pub kind: PatchKind,
    pub site_address: u64,
    pub region_start: u64,
    pub region_length: u64,
    pub key: u64,
    pub link_register: LinkRegister,
    pub gateway_site: Option<u64>,
    pub syscall_number: Option<u64>,
    pub block_address: u64,
    pub gate_address: u64,
}

/// Sidecar metadata: everything needed to reconstruct the dispatch
/// tables without re-running the planner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub text_base: u64,
    pub text_length: u64,
    pub rvc: bool,
    pub runtime_base: u64,
    pub trampoline: BlobPlacement,
    pub entry: BlobPlacement,
    pub block_table: BlobPlacement,
    pub entry_gate: u64,
    pub patches: Vec<PatchRecord>,
    pub unpatchable: Vec<(u64, UnpatchableReason)>,
}

impl Metadata {
    /// Dispatch descriptors for the interceptor runtime.
    pub fn dispatch_info(&self) -> Vec<PatchDispatchInfo> {
        self.patches
            .iter()
            .map(|p| PatchDispatchInfo {
                id: p.id,
                link_register: p.link_register,
                key: p.key,
                block_address: p.block_address,
                gate_address: p.gate_address,
                rematerialize_a7: if p.kind == PatchKind::Small {
                    p.syscall_number
                } else {
                    None
                },
            })
            .collect()
    }
}

/// Static footprint of one patched image, in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    pub patch_count: u64,
    pub relocated_bytes: u64,
    pub trampoline_bytes: u64,
    pub entry_bytes: u64,
    pub bitmap_bytes: u64,
}

impl Footprint {
    pub fn total(&self) -> u64 {
        self.relocated_bytes + self.trampoline_bytes + self.entry_bytes + self.bitmap_bytes
    }
}

/// Patch bitmap granularity: one bit per 2-byte instruction slot.
pub fn bitmap_bytes(text_length: u64, align: u64) -> u64 {
    text_length.div_ceil(8 * align)
}

pub fn account_footprint(patch_count: u64, text_length: u64) -> Footprint {
    Footprint {
        patch_count,
        relocated_bytes: patch_count * BLOCK_STRIDE,
        trampoline_bytes: 24,
        entry_bytes: ENTRY_LENGTH,
        bitmap_bytes: bitmap_bytes(text_length, 2),
    }
}

/// Everything produced by patch generation.
pub struct PatchArtifacts {
    pub patched_text: Vec<u8>,
    pub runtime_blob: Vec<u8>,
    pub metadata: Metadata,
    pub footprint: Footprint,
}

/// Generate patch bytes for every planned patch, build the runtime blob
/// (trampoline, context-save entry, relocated-block table) and overlay
/// the patches onto the text.
pub fn build_runtime(plan: &Plan, image: &CodeImage) -> Result<PatchArtifacts, CodegenError> {
    let rvc = plan.rvc;
    let base = plan.runtime_base;
    let entry_addr = base + ENTRY_OFFSET;
    let entry_gate = base + ENTRY_GATE_OFFSET;
    let table_base = base + BLOCK_TABLE_OFFSET;

    // Runtime blob: [trampoline][entry][blocks...]
    let blob_len = BLOCK_TABLE_OFFSET + plan.patches.len() as u64 * BLOCK_STRIDE;
    let mut blob = vec![0u8; blob_len as usize];

    // Shared trampoline: one jal into the entry blob.
    let tramp_jal =
        isa::encode_jal(isa::reg::ZERO, base, entry_addr).expect("entry is 16 bytes away");
    blob[0..4].copy_from_slice(&tramp_jal.to_le_bytes());

    // Entry blob: spill x1..x31 to the fixed scratch area with x0-relative
    // stores (clobbers nothing), then trap to the host at the entry gate.
    for (i, r) in (1u8..=31).enumerate() {
        let off = (ENTRY_OFFSET as usize) + i * 4;
        let sd = isa::asm_sd(r, isa::reg::ZERO, 8 * (r as i64));
        blob[off..off + 4].copy_from_slice(&sd.to_le_bytes());
    }
    blob[(ENTRY_GATE_OFFSET as usize)..(ENTRY_GATE_OFFSET as usize) + 4]
        .copy_from_slice(&isa::asm_ebreak().to_le_bytes());

    let mut overlays: Vec<(u64, Vec<u8>)> = Vec::new();
    let mut records: Vec<PatchRecord> = Vec::new();

    for (id, patch) in plan.patches.iter().enumerate() {
        let gateway_start = patch
            .gateway
            .map(|g| plan.patches[g].region_start)
            .or(if patch.kind == PatchKind::Gateway {
                Some(0) // unused
            } else {
                None
            });
        let patch_bytes = match patch.kind {
            PatchKind::Gateway => emit_gateway_patch(patch, base, rvc)?,
            PatchKind::Middle => emit_middle_patch(
                patch,
                gateway_start.ok_or(CodegenError::MissingGateway {
                    site: patch.site.address,
                })?,
                rvc,
            )?,
            PatchKind::Small => emit_small_patch(
                patch,
                gateway_start.ok_or(CodegenError::MissingGateway {
                    site: patch.site.address,
                })?,
            )?,
        };
        overlays.push((patch.region_start, patch_bytes));

        // Relocated block: unwind the redirect frames so the displaced
        // instructions run with the original sp, then gate, then return.
        let block_addr = table_base + id as u64 * BLOCK_STRIDE;
        let mut block = Vec::new();
        emit_pop_frame(&mut block, isa::reg::T0, rvc);
        if patch.kind == PatchKind::Middle {
            emit_pop_frame(&mut block, isa::reg::RA, rvc);
        }
        for insn in &patch.relocated_pre {
            let raw = insn.reencode();
            if insn.width == 2 {
                push16(&mut block, raw as u16);
            } else {
                push32(&mut block, raw);
            }
        }
        let gate_address = block_addr + block.len() as u64;
        push32(&mut block, isa::asm_ebreak());
        for insn in &patch.relocated_post {
            let raw = insn.reencode();
            if insn.width == 2 {
                push16(&mut block, raw as u16);
            } else {
                push32(&mut block, raw);
            }
        }
        let ret_pc = block_addr + block.len() as u64;
        let ret = isa::encode_jal(isa::reg::ZERO, ret_pc, patch.region_end()).map_err(|_| {
            CodegenError::OutOfReach {
                site: patch.site.address,
                what: "return jal",
                from: ret_pc,
                target: patch.region_end(),
            }
        })?;
        push32(&mut block, ret);
        if block.len() as u64 > BLOCK_STRIDE {
            return Err(CodegenError::BlockOverflow {
                site: patch.site.address,
                stride: BLOCK_STRIDE,
            });
        }
        let off = (block_addr - base) as usize;
        blob[off..off + block.len()].copy_from_slice(&block);

        records.push(PatchRecord {
            id,
            kind: patch.kind,
            site_address: patch.site.address,
            region_start: patch.region_start,
            region_length: patch.region_length,
            key: patch.key(rvc),
            link_register: match patch.link_register {
                r if r == isa::reg::RA => LinkRegister::Ra,
                r if r == isa::reg::A7 => LinkRegister::A7,
                _ => LinkRegister::T0,
            },
            gateway_site: patch.gateway.map(|g| plan.patches[g].site.address),
            syscall_number: patch.syscall_number,
            block_address: block_addr,
            gate_address,
        });
    }

    let overlay_refs: Vec<(u64, &[u8])> =
        overlays.iter().map(|(s, b)| (*s, b.as_slice())).collect();
    let patched_text = image::write_patched_text(image, &overlay_refs)?;

    let metadata = Metadata {
        text_base: image.base,
        text_length: image.bytes.len() as u64,
        rvc,
        runtime_base: base,
        trampoline: BlobPlacement {
            address: base,
            length: ENTRY_OFFSET,
        },
        entry: BlobPlacement {
            address: entry_addr,
            length: ENTRY_LENGTH,
        },
        block_table: BlobPlacement {
            address: table_base,
            length: plan.patches.len() as u64 * BLOCK_STRIDE,
        },
        entry_gate,
        patches: records,
        unpatchable: plan
            .unpatchable
            .iter()
            .map(|(s, r)| (s.address, r.clone()))
            .collect(),
    };
    let footprint = account_footprint(plan.patches.len() as u64, image.bytes.len() as u64);

    Ok(PatchArtifacts {
        patched_text,
        runtime_blob: blob,
        metadata,
        footprint,
    })
}

/// Sanity check: every emitted patch region decodes cleanly and the key
/// map is injective. Used by tests and `--strict` verification.
pub fn validate_keys(metadata: &Metadata) -> bool {
    let mut keys: Vec<u64> = metadata.patches.iter().map(|p| p.key).collect();
    keys.sort_unstable();
    keys.windows(2).all(|w| w[0] != w[1])
}
