//! Differential verification, overhead benchmarking and the
//! cross-architecture footprint model.
//!
//! Verification runs the original and patched images under the same
//! kernel model and demands identical syscall observables, identical
//! final registers and identical memory outside the runtime's own
//! regions — with every patched-run syscall arriving via interception.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::codegen::{bitmap_bytes, PatchArtifacts};
use crate::emulator::{
    Emulator, EmuError, ExecutionTrace, InterceptorRuntime, KernelModel, MachineState,
    PassthroughHooks, PreHookResult, SyscallHooks, SyscallVia, TraceEvent, SCRATCH_BASE,
    SCRATCH_LEN, STACK_TOP,
};
use crate::image::CodeImage;

/// Bytes of stack below the initial sp that the redirect frames touch;
/// excluded from the memory comparison.
const STACK_SLOP: u64 = 64;

/// Final state and trace of one run.
pub struct RunOutput {
    pub trace: ExecutionTrace,
    pub state: MachineState,
}

pub fn run_original(
    image: &CodeImage,
    cost_units: u64,
    limit: u64,
) -> Result<RunOutput, EmuError> {
    let mut emu = Emulator::new(KernelModel::new(cost_units));
    emu.limit = limit;
    emu.load_image(image.base, &image.bytes);
    emu.run(image.base)?;
    Ok(RunOutput {
        trace: emu.trace,
        state: emu.state,
    })
}

pub fn run_patched(
    image: &CodeImage,
    artifacts: &PatchArtifacts,
    hooks: Box<dyn SyscallHooks>,
    cost_units: u64,
    limit: u64,
) -> Result<RunOutput, EmuError> {
    let mut emu = Emulator::new(KernelModel::new(cost_units));
    emu.limit = limit;
    emu.load_image(image.base, &artifacts.patched_text);
    emu.load_image(artifacts.metadata.runtime_base, &artifacts.runtime_blob);
    emu.install_interceptor(InterceptorRuntime::new(
        artifacts.metadata.entry_gate,
        artifacts.metadata.dispatch_info(),
        hooks,
    ));
    emu.run(image.base)?;
    Ok(RunOutput {
        trace: emu.trace,
        state: emu.state,
    })
}

/// First observed difference between the two runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Divergence {
    SyscallCount {
        original: usize,
        patched: usize,
    },
    Syscall {
        index: usize,
        original: TraceEvent,
        patched: TraceEvent,
    },
    NotIntercepted {
        index: usize,
    },
    Register {
        index: u8,
        original: u64,
        patched: u64,
    },
    Memory {
        address: u64,
        original: u8,
        patched: u8,
    },
    EmulatorError {
        which: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub equivalent: bool,
    pub all_intercepted: bool,
    pub syscall_count: usize,
    pub divergence: Option<Divergence>,
}

impl Verdict {
    fn fail(divergence: Divergence) -> Verdict {
        Verdict {
            equivalent: false,
            all_intercepted: false,
            syscall_count: 0,
            divergence: Some(divergence),
        }
    }
}

/// Strip a syscall event to its observables (drop the `via` channel).
fn syscall_obs(e: &TraceEvent) -> Option<(u64, [u64; 6], u64, u64, SyscallVia)> {
    match e {
        TraceEvent::Syscall {
            number,
            args,
            ret0,
            ret1,
            via,
        } => Some((*number, *args, *ret0, *ret1, *via)),
        _ => None,
    }
}

/// Run both images and compare. Passthrough hooks keep the kernel
/// observable identical; any hook that alters results is out of scope
/// for equivalence checking.
pub fn differential_verify(
    image: &CodeImage,
    artifacts: &PatchArtifacts,
    cost_units: u64,
    limit: u64,
) -> Verdict {
    let original = match run_original(image, cost_units, limit) {
        Ok(o) => o,
        Err(e) => {
            return Verdict::fail(Divergence::EmulatorError {
                which: "original".into(),
                message: e.to_string(),
            })
        }
    };
    let patched = match run_patched(
        image,
        artifacts,
        Box::new(PassthroughHooks),
        cost_units,
        limit,
    ) {
        Ok(o) => o,
        Err(e) => {
            return Verdict::fail(Divergence::EmulatorError {
                which: "patched".into(),
                message: e.to_string(),
            })
        }
    };
    compare_runs(image, artifacts, &original, &patched)
}

pub fn compare_runs(
    image: &CodeImage,
    artifacts: &PatchArtifacts,
    original: &RunOutput,
    patched: &RunOutput,
) -> Verdict {
    let orig_calls: Vec<_> = original
        .trace
        .events
        .iter()
        .filter_map(syscall_obs)
        .collect();
    let patched_calls: Vec<_> = patched
        .trace
        .events
        .iter()
        .filter_map(syscall_obs)
        .collect();

    if orig_calls.len() != patched_calls.len() {
        return Verdict::fail(Divergence::SyscallCount {
            original: orig_calls.len(),
            patched: patched_calls.len(),
        });
    }
    let mut all_intercepted = true;
    for (i, (o, p)) in orig_calls.iter().zip(&patched_calls).enumerate() {
        if (o.0, o.1, o.2, o.3) != (p.0, p.1, p.2, p.3) {
            let original = original.trace.events.iter().filter_map(|e| syscall_obs(e).map(|_| e.clone())).nth(i).unwrap();
            let patched = patched.trace.events.iter().filter_map(|e| syscall_obs(e).map(|_| e.clone())).nth(i).unwrap();
            return Verdict::fail(Divergence::Syscall {
                index: i,
                original,
                patched,
            });
        }
        if p.4 != SyscallVia::Intercepted {
            all_intercepted = false;
        }
    }

    for r in 1u8..32 {
        let (a, b) = (original.state.regs[r as usize], patched.state.regs[r as usize]);
        if a != b {
            return Verdict::fail(Divergence::Register {
                index: r,
                original: a,
                patched: b,
            });
        }
    }

    // Memory, excluding the regions the runtime legitimately owns.
    let runtime_end =
        artifacts.metadata.runtime_base + artifacts.runtime_blob.len() as u64;
    let excluded = |addr: u64| -> bool {
        (SCRATCH_BASE..SCRATCH_BASE + SCRATCH_LEN).contains(&addr)
            || image.contains(addr)
            || (artifacts.metadata.runtime_base..runtime_end).contains(&addr)
            || (STACK_TOP - STACK_SLOP..STACK_TOP).contains(&addr)
    };
    let addrs: BTreeSet<u64> = original
        .state
        .memory
        .keys()
        .chain(patched.state.memory.keys())
        .copied()
        .filter(|a| !excluded(*a))
        .collect();
    for addr in addrs {
        let (a, b) = (
            original.state.read_byte(addr),
            patched.state.read_byte(addr),
        );
        if a != b {
            return Verdict::fail(Divergence::Memory {
                address: addr,
                original: a,
                patched: b,
            });
        }
    }

    Verdict {
        equivalent: true,
        all_intercepted,
        syscall_count: orig_calls.len(),
        divergence: None,
    }
}

/// Hooks that bypass every non-exit syscall with a fixed return pair.
pub struct BypassAllHooks;

impl SyscallHooks for BypassAllHooks {
    fn pre(&mut self, number: u64, _args: &[u64; 6]) -> PreHookResult {
        if crate::emulator::is_exit_family(number) {
            PreHookResult::Passthrough
        } else {
            PreHookResult::Bypass { ret0: 0, ret1: 0 }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub instret: u64,
    pub kernel_cost: u64,
    pub syscalls: u64,
}

impl CostBreakdown {
    pub fn total(&self) -> u64 {
        self.instret + self.kernel_cost
    }

    fn from_trace(trace: &ExecutionTrace) -> CostBreakdown {
        CostBreakdown {
            instret: trace.instret_total,
            kernel_cost: trace.kernel_cost_total,
            syscalls: trace.syscalls().count() as u64,
        }
    }
}

/// Three-scenario overhead report: unpatched, patched with hooks that
/// bypass the kernel, patched with full passthrough.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub normal: CostBreakdown,
    pub bypass: CostBreakdown,
    pub kernel: CostBreakdown,
    pub bypass_overhead_pct: f64,
    pub kernel_overhead_pct: f64,
}

pub fn bench(
    image: &CodeImage,
    artifacts: &PatchArtifacts,
    cost_units: u64,
    limit: u64,
) -> Result<BenchReport, EmuError> {
    let normal = run_original(image, cost_units, limit)?;
    let bypass = run_patched(image, artifacts, Box::new(BypassAllHooks), cost_units, limit)?;
    let kernel = run_patched(
        image,
        artifacts,
        Box::new(PassthroughHooks),
        cost_units,
        limit,
    )?;
    let normal = CostBreakdown::from_trace(&normal.trace);
    let bypass = CostBreakdown::from_trace(&bypass.trace);
    let kernel = CostBreakdown::from_trace(&kernel.trace);
    let pct = |c: &CostBreakdown| {
        (c.total() as f64 - normal.total() as f64) * 100.0 / normal.total() as f64
    };
    Ok(BenchReport {
        bypass_overhead_pct: pct(&bypass),
        kernel_overhead_pct: pct(&kernel),
        normal,
        bypass,
        kernel,
    })
}

/// Static per-architecture memory model for the footprint comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchCostModel {
    pub name: &'static str,
    /// Marginal bytes per patched site.
    pub per_patch_bytes: u64,
    /// One-time shared machinery.
    pub shared_bytes: u64,
    /// Minimum instruction alignment, which sets bitmap granularity.
    pub bitmap_align: u64,
}

/// This toolkit's layout: fixed-stride relocated blocks plus one shared
/// trampoline, with 2-byte instruction alignment.
pub const RISCV_MODEL: ArchCostModel = ArchCostModel {
    name: "riscv64",
    per_patch_bytes: 64,
    shared_bytes: 24,
    bitmap_align: 2,
};

/// The x86-64 baseline layout: a per-patch template plus a per-patch
/// trampoline, byte-aligned instructions.
pub const X86_MODEL: ArchCostModel = ArchCostModel {
    name: "x86_64",
    per_patch_bytes: 512 + 128,
    shared_bytes: 0,
    bitmap_align: 1,
};

impl ArchCostModel {
    pub fn total_bytes(&self, patches: u64, text_length: u64) -> u64 {
        self.per_patch_bytes * patches
            + self.shared_bytes
            + bitmap_bytes(text_length, self.bitmap_align)
    }

    /// Marginal cost per additional patch: the slope of `total_bytes`
    /// in the patch count.
    pub fn slope(&self) -> u64 {
        self.per_patch_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootprintComparison {
    pub patches: u64,
    pub text_length: u64,
    pub riscv_total: u64,
    pub x86_total: u64,
    pub ratio_pct: f64,
    pub riscv_bitmap: u64,
    pub x86_bitmap: u64,
    pub slope_ratio: f64,
}

pub fn footprint_compare(patches: u64, text_length: u64) -> FootprintComparison {
    let riscv_total = RISCV_MODEL.total_bytes(patches, text_length);
    let x86_total = X86_MODEL.total_bytes(patches, text_length);
    FootprintComparison {
        patches,
        text_length,
        riscv_total,
        x86_total,
        ratio_pct: riscv_total as f64 * 100.0 / x86_total as f64,
        riscv_bitmap: bitmap_bytes(text_length, RISCV_MODEL.bitmap_align),
        x86_bitmap: bitmap_bytes(text_length, X86_MODEL.bitmap_align),
        slope_ratio: X86_MODEL.slope() as f64 / RISCV_MODEL.slope() as f64,
    }
}
