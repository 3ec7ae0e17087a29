//! Static binary-rewriting toolkit for RISC-V syscall interception.
//!
//! The pipeline finds `ecall` sites in RV64IMC code, classifies each by
//! how much relocatable context surrounds it, rewrites the site with one
//! of three redirect forms (gateway, middle, small), and builds a shared
//! runtime blob — trampoline, context-save entry, per-patch relocated
//! blocks — that routes every intercepted syscall through user hooks.
//! An embedded RV64IMC interpreter differentially verifies that patched
//! programs behave exactly like the originals.

pub mod analysis;
pub mod cli;
pub mod codegen;
pub mod corpus;
pub mod emulator;
pub mod image;
pub mod isa;
pub mod planner;
pub mod verify;
