//! Patch classification and gateway assignment.
//!
//! Sites are classified Gateway/Middle/Small by available window space,
//! the patch region is carved out of the window, and every non-gateway
//! patch is assigned the nearest jal-reachable gateway.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, EcallSite, PatchWindow, SyscallNumberFact,
};
use crate::image::CodeImage;
use crate::isa::{self, Instruction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PatchKind {
    Gateway,
    Middle,
    Small,
}

/// Why a site could not be patched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnpatchableReason {
    SmallWithoutKnownNumber,
    WindowTooSmall,
    NoReachableGateway,
    NoExactRegionFit,
    GatewayEntryOutOfReach,
}

/// Byte budgets per patch kind. The no-RVC variants lose the compressed
/// prologue/epilogue encodings and grow accordingly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budgets {
    pub gateway: u64,
    pub middle: u64,
    pub small: u64,
}

impl Budgets {
    pub fn for_mode(rvc: bool) -> Budgets {
        if rvc {
            Budgets {
                gateway: 16,
                middle: 12,
                small: 4,
            }
        } else {
            Budgets {
                gateway: 24,
                middle: 16,
                small: 4,
            }
        }
    }

    pub fn of(&self, kind: PatchKind) -> u64 {
        match kind {
            PatchKind::Gateway => self.gateway,
            PatchKind::Middle => self.middle,
            PatchKind::Small => self.small,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannerConfig {
    pub rvc: bool,
    /// Base address for the runtime blobs; gateways must reach it with
    /// auipc+jalr. Defaults to the first 4 KiB-aligned address past the
    /// text end.
    pub runtime_base: Option<u64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            rvc: true,
            runtime_base: None,
        }
    }
}

pub fn default_runtime_base(image: &CodeImage) -> u64 {
    (image.end() + 0xfff) & !0xfff
}

/// One planned patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedPatch {
    pub site: EcallSite,
    pub kind: PatchKind,
    pub region_start: u64,
    pub region_length: u64,
    /// Index into `Plan::patches` of the assigned gateway (absent for
    /// gateways themselves).
    pub gateway: Option<usize>,
    pub relocated_pre: Vec<Instruction>,
    pub relocated_post: Vec<Instruction>,
    pub syscall_number: Option<u64>,
    pub link_register: isa::Reg,
}

impl PlannedPatch {
    pub fn region_end(&self) -> u64 {
        self.region_start + self.region_length
    }

    /// Address of the redirect jump whose link value identifies this
    /// patch: the jal for Middle/Small, the jalr for Gateway.
    pub fn redirect_pc(&self, rvc: bool) -> u64 {
        match self.kind {
            PatchKind::Gateway => self.region_start + if rvc { 8 } else { 12 },
            PatchKind::Middle => self.region_start + if rvc { 4 } else { 8 },
            PatchKind::Small => self.region_start,
        }
    }

    /// The identification key: link value left by the redirect jump.
    pub fn key(&self, rvc: bool) -> u64 {
        self.redirect_pc(rvc) + 4
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub gateway: usize,
    pub middle: usize,
    pub small: usize,
    pub unpatchable: usize,
    pub gateway_pct: f64,
    pub middle_pct: f64,
    pub small_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub patches: Vec<PlannedPatch>,
    pub unpatchable: Vec<(EcallSite, UnpatchableReason)>,
    pub distribution: Distribution,
    pub rvc: bool,
    pub runtime_base: u64,
}

/// Classification by available space, before region carving.
pub fn classify(
    window: &PatchWindow,
    fact: &SyscallNumberFact,
    budgets: &Budgets,
) -> Result<PatchKind, UnpatchableReason> {
    let usable = window.usable_bytes();
    if usable >= budgets.gateway {
        Ok(PatchKind::Gateway)
    } else if usable >= budgets.middle {
        Ok(PatchKind::Middle)
    } else if usable >= budgets.small {
        if fact.value.is_some() {
            Ok(PatchKind::Small)
        } else {
            Err(UnpatchableReason::SmallWithoutKnownNumber)
        }
    } else {
        Err(UnpatchableReason::WindowTooSmall)
    }
}

/// Carve the patch region out of the window: exactly `budget` bytes on
/// instruction boundaries containing the ecall, preferring pre-ecall
/// bytes. Returns (region_start, pre, post) or None when no combination
/// of whole instructions hits the budget exactly.
fn carve_region(
    window: &PatchWindow,
    budget: u64,
) -> Option<(u64, Vec<Instruction>, Vec<Instruction>)> {
    let need = budget.checked_sub(4).expect("budget covers the ecall");
    let pre_widths: Vec<u64> = window
        .pre_instructions
        .iter()
        .rev() // innermost (closest to the ecall) first
        .map(|i| i.width as u64)
        .collect();
    let post_widths: Vec<u64> = window
        .post_instructions
        .iter()
        .map(|i| i.width as u64)
        .collect();

    // Prefix sums of bytes taken from each side.
    let sums = |widths: &[u64]| -> Vec<u64> {
        let mut acc = vec![0u64];
        for w in widths {
            acc.push(acc.last().unwrap() + w);
        }
        acc
    };
    let pre_sums = sums(&pre_widths);
    let post_sums = sums(&post_widths);

    // Maximize the pre-side share.
    let mut best: Option<(usize, usize)> = None;
    for (n_pre, pre_bytes) in pre_sums.iter().enumerate() {
        if *pre_bytes > need {
            break;
        }
        let rest = need - pre_bytes;
        if let Some(n_post) = post_sums.iter().position(|&p| p == rest) {
            best = Some((n_pre, n_post));
        }
    }
    let (n_pre, n_post) = best?;

    let pre: Vec<Instruction> = window.pre_instructions[window.pre_instructions.len() - n_pre..]
        .to_vec();
    let post: Vec<Instruction> = window.post_instructions[..n_post].to_vec();
    let pre_bytes: u64 = pre.iter().map(|i| i.width as u64).sum();
    Some((window.site.address - pre_bytes, pre, post))
}

/// Full pipeline: scan, window, extract, classify, carve, assign.
/// Deterministic for a given image and config.
pub fn plan(image: &CodeImage, config: &PlannerConfig) -> Plan {
    let budgets = Budgets::for_mode(config.rvc);
    let runtime_base = config
        .runtime_base
        .unwrap_or_else(|| default_runtime_base(image));
    let branch_targets = analysis::collect_branch_targets(image);
    let sites = analysis::scan_ecalls(image);

    let mut patches: Vec<PlannedPatch> = Vec::new();
    let mut unpatchable: Vec<(EcallSite, UnpatchableReason)> = Vec::new();

    for site in sites {
        let window = analysis::compute_window(image, site, &branch_targets);
        let fact = analysis::extract_syscall_number(image, site, &branch_targets);
        let kind = match classify(&window, &fact, &budgets) {
            Ok(k) => k,
            Err(reason) => {
                unpatchable.push((site, reason));
                continue;
            }
        };
        let Some((region_start, pre, post)) = carve_region(&window, budgets.of(kind)) else {
            unpatchable.push((site, UnpatchableReason::NoExactRegionFit));
            continue;
        };
        patches.push(PlannedPatch {
            site,
            kind,
            region_start,
            region_length: budgets.of(kind),
            gateway: None,
            relocated_pre: pre,
            relocated_post: post,
            syscall_number: fact.value,
            link_register: match kind {
                PatchKind::Gateway => isa::reg::T0,
                PatchKind::Middle => isa::reg::RA,
                PatchKind::Small => isa::reg::A7,
            },
        });
    }

    assign_gateways(&mut patches, &mut unpatchable, runtime_base, config.rvc);

    let distribution = distribution_of(&patches, &unpatchable);
    Plan {
        patches,
        unpatchable,
        distribution,
        rvc: config.rvc,
        runtime_base,
    }
}

/// Assign every Middle/Small patch the nearest jal-reachable gateway
/// (ties to the lower address); verify every gateway reaches the runtime
/// entry with auipc+jalr. Failures demote the site to unpatchable.
fn assign_gateways(
    patches: &mut Vec<PlannedPatch>,
    unpatchable: &mut Vec<(EcallSite, UnpatchableReason)>,
    runtime_base: u64,
    rvc: bool,
) {
    // Gateways that cannot reach the entry point are dropped first.
    let mut demoted: Vec<usize> = Vec::new();
    for (i, p) in patches.iter().enumerate() {
        if p.kind == PatchKind::Gateway {
            let auipc_pc = p.region_start + if rvc { 4 } else { 8 };
            if !isa::auipc_jalr_in_range(auipc_pc, runtime_base) {
                demoted.push(i);
            }
        }
    }
    for &i in demoted.iter().rev() {
        let p = patches.remove(i);
        unpatchable.push((p.site, UnpatchableReason::GatewayEntryOutOfReach));
    }

    // (site address, region start) per gateway; patches keep nearest
    // assignments by site address, then indices are resolved at the end
    // so demotion-induced shifts cannot corrupt them.
    let gateways: Vec<(u64, u64)> = patches
        .iter()
        .filter(|p| p.kind == PatchKind::Gateway)
        .map(|p| (p.site.address, p.region_start))
        .collect();

    let chosen_addr: Vec<Option<u64>> = patches
        .iter()
        .map(|p| {
            if p.kind == PatchKind::Gateway {
                return None;
            }
            let jal_pc = p.redirect_pc(rvc);
            gateways
                .iter()
                .filter(|(_, region_start)| isa::jal_in_range(jal_pc, *region_start))
                .min_by_key(|(addr, _)| (addr.abs_diff(p.site.address), *addr))
                .map(|(addr, _)| *addr)
        })
        .collect();

    let mut keep = Vec::with_capacity(patches.len());
    for (p, addr) in std::mem::take(patches).into_iter().zip(chosen_addr) {
        if p.kind != PatchKind::Gateway && addr.is_none() {
            unpatchable.push((p.site, UnpatchableReason::NoReachableGateway));
        } else {
            keep.push((p, addr));
        }
    }
    let index_of: std::collections::BTreeMap<u64, usize> = keep
        .iter()
        .enumerate()
        .filter(|(_, (p, _))| p.kind == PatchKind::Gateway)
        .map(|(i, (p, _))| (p.site.address, i))
        .collect();
    *patches = keep
        .into_iter()
        .map(|(mut p, addr)| {
            p.gateway = addr.map(|a| index_of[&a]);
            p
        })
        .collect();
}

fn distribution_of(
    patches: &[PlannedPatch],
    unpatchable: &[(EcallSite, UnpatchableReason)],
) -> Distribution {
    let gateway = patches.iter().filter(|p| p.kind == PatchKind::Gateway).count();
    let middle = patches.iter().filter(|p| p.kind == PatchKind::Middle).count();
    let small = patches.iter().filter(|p| p.kind == PatchKind::Small).count();
    let total = patches.len() + unpatchable.len();
    let pct = |n: usize| {
        if total == 0 {
            0.0
        } else {
            n as f64 * 100.0 / total as f64
        }
    };
    Distribution {
        gateway,
        middle,
        small,
        unpatchable: unpatchable.len(),
        gateway_pct: pct(gateway),
        middle_pct: pct(middle),
        small_pct: pct(small),
    }
}
