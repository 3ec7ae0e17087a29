//! Command-line front end.
//!
//! Exit codes: 0 success, 2 unusable input, 3 unpatchable sites under
//! `--strict`, 4 verification failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::codegen::{self, PatchArtifacts};
use crate::corpus::{self, CorpusSpec};
use crate::emulator::{DEFAULT_COST_UNITS, DEFAULT_INSTRET_LIMIT};
use crate::image::{self, CodeImage};
use crate::planner::{self, PlannerConfig};
use crate::verify;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_STRICT_UNPATCHABLE: u8 = 3;
pub const EXIT_VERIFY_FAILED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "rvpatch", version, about = "RISC-V syscall interception patcher")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputKind {
    Elf,
    Raw,
    CorpusSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Input file: ELF object, raw code blob or corpus spec (JSON).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "elf")]
    kind: InputKind,
    /// Base address for raw blobs.
    #[arg(long, value_parser = parse_u64, default_value = "0x10000")]
    base: u64,
    /// Plan for a target without compressed instructions.
    #[arg(long)]
    no_rvc: bool,
    /// Seed override for corpus-spec inputs.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the runtime blob placement address.
    #[arg(long, value_parser = parse_u64)]
    placement: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan for syscall sites, windows and patch classification.
    Analyze {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Generate patches, the runtime blob and sidecar metadata.
    Patch {
        #[command(flatten)]
        input: InputArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Fail (exit 3) when any site cannot be patched.
        #[arg(long)]
        strict: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Differentially verify patched against original execution.
    Verify {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = DEFAULT_COST_UNITS)]
        cost_units: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Measure interception overhead in three scenarios.
    Bench {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = DEFAULT_COST_UNITS)]
        cost_units: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Compare the static memory model against the x86-64 baseline.
    Footprint {
        /// Number of patched sites.
        #[arg(long, default_value_t = 2048)]
        patches: u64,
        /// Text size in bytes.
        #[arg(long, value_parser = parse_u64, default_value = "0x100000")]
        text_bytes: u64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let s = s.trim();
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).map_err(|e| e.to_string())
    } else {
        s.parse().map_err(|e: std::num::ParseIntError| e.to_string())
    }
}

struct LoadedInput {
    image: CodeImage,
    rvc: bool,
    placement: Option<u64>,
}

fn load_input(args: &InputArgs) -> Result<LoadedInput, String> {
    let bytes = fs::read(&args.input)
        .map_err(|e| format!("cannot read {}: {e}", args.input.display()))?;
    let (image, rvc) = match args.kind {
        InputKind::Elf => (
            image::load_elf_text(&bytes).map_err(|e| e.to_string())?,
            !args.no_rvc,
        ),
        InputKind::Raw => (
            image::load_raw(bytes, args.base).map_err(|e| e.to_string())?,
            !args.no_rvc,
        ),
        InputKind::CorpusSpec => {
            let mut spec: CorpusSpec =
                serde_json::from_slice(&bytes).map_err(|e| format!("bad corpus spec: {e}"))?;
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            if args.no_rvc {
                spec.rvc = false;
            }
            let rvc = spec.rvc;
            let (image, _) = corpus::generate(&spec).map_err(|e| e.to_string())?;
            (image, rvc)
        }
    };
    Ok(LoadedInput {
        image,
        rvc,
        placement: args.placement,
    })
}

fn plan_and_build(input: &LoadedInput) -> Result<(planner::Plan, PatchArtifacts), String> {
    let config = PlannerConfig {
        rvc: input.rvc,
        runtime_base: input.placement,
    };
    let plan = planner::plan(&input.image, &config);
    let artifacts = codegen::build_runtime(&plan, &input.image).map_err(|e| e.to_string())?;
    Ok((plan, artifacts))
}

fn input_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_INPUT)
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Analyze { input, format } => {
            let loaded = match load_input(&input) {
                Ok(l) => l,
                Err(e) => return input_error(&e),
            };
            let config = PlannerConfig {
                rvc: loaded.rvc,
                runtime_base: loaded.placement,
            };
            let plan = planner::plan(&loaded.image, &config);
            let report = json!({
                "base": loaded.image.base,
                "length": loaded.image.bytes.len(),
                "rvc": loaded.rvc,
                "sites": plan.patches.len() + plan.unpatchable.len(),
                "distribution": plan.distribution,
                "patches": plan.patches.iter().map(|p| json!({
                    "site": p.site.address,
                    "kind": p.kind,
                    "region_start": p.region_start,
                    "region_length": p.region_length,
                    "syscall_number": p.syscall_number,
                })).collect::<Vec<_>>(),
                "unpatchable": plan.unpatchable.iter().map(|(s, r)| json!({
                    "site": s.address,
                    "reason": r,
                })).collect::<Vec<_>>(),
            });
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report).unwrap()),
                Format::Text => {
                    println!(
                        "{} sites: {} gateway, {} middle, {} small, {} unpatchable",
                        plan.patches.len() + plan.unpatchable.len(),
                        plan.distribution.gateway,
                        plan.distribution.middle,
                        plan.distribution.small,
                        plan.distribution.unpatchable,
                    );
                    for p in &plan.patches {
                        println!(
                            "  {:#x}: {:?} region [{:#x}, +{}) number {:?}",
                            p.site.address, p.kind, p.region_start, p.region_length,
                            p.syscall_number,
                        );
                    }
                    for (s, r) in &plan.unpatchable {
                        println!("  {:#x}: unpatchable ({r:?})", s.address);
                    }
                }
            }
            ExitCode::from(EXIT_OK)
        }
        Command::Patch {
            input,
            out,
            strict,
            format,
        } => {
            let loaded = match load_input(&input) {
                Ok(l) => l,
                Err(e) => return input_error(&e),
            };
            let (plan, artifacts) = match plan_and_build(&loaded) {
                Ok(v) => v,
                Err(e) => return input_error(&e),
            };
            if strict && !plan.unpatchable.is_empty() {
                eprintln!(
                    "error: {} site(s) unpatchable under --strict",
                    plan.unpatchable.len()
                );
                return ExitCode::from(EXIT_STRICT_UNPATCHABLE);
            }
            if let Err(e) = write_artifacts(&out, &artifacts) {
                return input_error(&e);
            }
            match format {
                Format::Json => {
                    let report = json!({
                        "out": out.display().to_string(),
                        "patches": artifacts.metadata.patches.len(),
                        "unpatchable": artifacts.metadata.unpatchable.len(),
                        "footprint_total": artifacts.footprint.total(),
                    });
                    println!("{}", serde_json::to_string_pretty(&report).unwrap());
                }
                Format::Text => println!(
                    "wrote {} patches to {} ({} bytes runtime)",
                    artifacts.metadata.patches.len(),
                    out.display(),
                    artifacts.runtime_blob.len(),
                ),
            }
            ExitCode::from(EXIT_OK)
        }
        Command::Verify {
            input,
            strict,
            cost_units,
            format,
        } => {
            let loaded = match load_input(&input) {
                Ok(l) => l,
                Err(e) => return input_error(&e),
            };
            let (plan, artifacts) = match plan_and_build(&loaded) {
                Ok(v) => v,
                Err(e) => return input_error(&e),
            };
            if strict && !plan.unpatchable.is_empty() {
                eprintln!(
                    "error: {} site(s) unpatchable under --strict",
                    plan.unpatchable.len()
                );
                return ExitCode::from(EXIT_STRICT_UNPATCHABLE);
            }
            let verdict = verify::differential_verify(
                &loaded.image,
                &artifacts,
                cost_units,
                DEFAULT_INSTRET_LIMIT,
            );
            match format {
                Format::Json => {
                    println!("{}", serde_json::to_string_pretty(&verdict).unwrap())
                }
                Format::Text => {
                    if verdict.equivalent {
                        println!(
                            "equivalent: {} syscalls, all intercepted: {}",
                            verdict.syscall_count, verdict.all_intercepted
                        );
                    } else {
                        println!("DIVERGED: {:?}", verdict.divergence);
                    }
                }
            }
            if verdict.equivalent && verdict.all_intercepted {
                ExitCode::from(EXIT_OK)
            } else {
                ExitCode::from(EXIT_VERIFY_FAILED)
            }
        }
        Command::Bench {
            input,
            cost_units,
            format,
        } => {
            let loaded = match load_input(&input) {
                Ok(l) => l,
                Err(e) => return input_error(&e),
            };
            let (_, artifacts) = match plan_and_build(&loaded) {
                Ok(v) => v,
                Err(e) => return input_error(&e),
            };
            let report = match verify::bench(
                &loaded.image,
                &artifacts,
                cost_units,
                DEFAULT_INSTRET_LIMIT,
            ) {
                Ok(r) => r,
                Err(e) => return input_error(&e.to_string()),
            };
            match format {
                Format::Json => {
                    println!("{}", serde_json::to_string_pretty(&report).unwrap())
                }
                Format::Text => {
                    println!(
                        "normal:  {} instret + {} kernel = {}",
                        report.normal.instret,
                        report.normal.kernel_cost,
                        report.normal.total()
                    );
                    println!(
                        "bypass:  {} instret + {} kernel = {} ({:+.1}%)",
                        report.bypass.instret,
                        report.bypass.kernel_cost,
                        report.bypass.total(),
                        report.bypass_overhead_pct
                    );
                    println!(
                        "kernel:  {} instret + {} kernel = {} ({:+.1}%)",
                        report.kernel.instret,
                        report.kernel.kernel_cost,
                        report.kernel.total(),
                        report.kernel_overhead_pct
                    );
                }
            }
            ExitCode::from(EXIT_OK)
        }
        Command::Footprint {
            patches,
            text_bytes,
            format,
        } => {
            let cmp = verify::footprint_compare(patches, text_bytes);
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&cmp).unwrap()),
                Format::Text => {
                    println!(
                        "riscv64: {} bytes ({:.2} KiB), bitmap {} bytes",
                        cmp.riscv_total,
                        cmp.riscv_total as f64 / 1024.0,
                        cmp.riscv_bitmap
                    );
                    println!(
                        "x86_64:  {} bytes ({:.2} MiB), bitmap {} bytes",
                        cmp.x86_total,
                        cmp.x86_total as f64 / (1024.0 * 1024.0),
                        cmp.x86_bitmap
                    );
                    println!(
                        "ratio {:.1}%, marginal slope ratio {:.1}x",
                        cmp.ratio_pct, cmp.slope_ratio
                    );
                }
            }
            ExitCode::from(EXIT_OK)
        }
    }
}

fn write_artifacts(out: &Path, artifacts: &PatchArtifacts) -> Result<(), String> {
    fs::create_dir_all(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    let write = |name: &str, bytes: &[u8]| -> Result<(), String> {
        fs::write(out.join(name), bytes)
            .map_err(|e| format!("cannot write {}: {e}", out.join(name).display()))
    };
    write("patched.bin", &artifacts.patched_text)?;
    write("runtime.bin", &artifacts.runtime_blob)?;
    let meta = serde_json::to_vec_pretty(&artifacts.metadata).map_err(|e| e.to_string())?;
    write("metadata.json", &meta)
}
