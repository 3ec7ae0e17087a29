//! Deterministic RV64IMC interpreter.
//!
//! The emulator is the oracle for every patching claim: it runs original
//! and patched images, traps `ecall` into a synthetic kernel model and
//! `ebreak` into the host-side interceptor runtime, counts instructions
//! and exposes full state snapshots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{self, decode, Instruction, Kind, Reg};

/// Jumping here terminates a run.
pub const HALT_ADDRESS: u64 = 0xdead_0000;

/// Fixed scratch area for the interception runtime's context save.
/// Addressable with x0-relative stores, excluded from memory equivalence.
pub const SCRATCH_BASE: u64 = 0;
pub const SCRATCH_LEN: u64 = 0x200;

/// Default stack pointer for fresh machines.
pub const STACK_TOP: u64 = 0x8000_0000;

/// Default instruction budget.
pub const DEFAULT_INSTRET_LIMIT: u64 = 1_000_000;

/// RV64 Linux syscall numbers the kernel model treats specially.
pub const SYSCALL_EXIT: u64 = 93;
pub const SYSCALL_EXIT_GROUP: u64 = 94;
pub const CLONE_FAMILY: [u64; 2] = [220, 435];

pub fn is_clone_family(number: u64) -> bool {
    CLONE_FAMILY.contains(&number)
}

pub fn is_exit_family(number: u64) -> bool {
    number == SYSCALL_EXIT || number == SYSCALL_EXIT_GROUP
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EmuError {
    #[error("illegal instruction {raw:#010x} at pc {pc:#x}")]
    IllegalInstruction { pc: u64, raw: u32 },
    #[error("misaligned pc {pc:#x}")]
    MisalignedPc { pc: u64 },
    #[error("unmapped fetch at pc {pc:#x}")]
    UnmappedFetch { pc: u64 },
    #[error("instruction limit {limit} exceeded at pc {pc:#x}")]
    LimitExceeded { pc: u64, limit: u64 },
    #[error("ebreak at pc {pc:#x} with no interceptor installed")]
    UnexpectedEbreak { pc: u64 },
    #[error("dispatch failure at pc {pc:#x}: no patch key in ra/a7/t0")]
    DispatchFailure { pc: u64 },
}

/// Full architectural state. x0 is hardwired to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub regs: [u64; 32],
    pub pc: u64,
    pub memory: BTreeMap<u64, u8>,
    pub instret: u64,
}

impl Default for MachineState {
    fn default() -> Self {
        let mut regs = [0u64; 32];
        regs[isa::reg::SP as usize] = STACK_TOP;
        regs[isa::reg::RA as usize] = HALT_ADDRESS;
        MachineState {
            regs,
            pc: 0,
            memory: BTreeMap::new(),
            instret: 0,
        }
    }
}

impl MachineState {
    pub fn reg(&self, r: Reg) -> u64 {
        if r == 0 {
            0
        } else {
            self.regs[r as usize]
        }
    }

    pub fn set_reg(&mut self, r: Reg, value: u64) {
        if r != 0 {
            self.regs[r as usize] = value;
        }
    }

    pub fn load_image(&mut self, base: u64, bytes: &[u8]) {
        for (i, b) in bytes.iter().enumerate() {
            self.memory.insert(base + i as u64, *b);
        }
    }

    pub fn read_byte(&self, addr: u64) -> u8 {
        self.memory.get(&addr).copied().unwrap_or(0)
    }

    pub fn read_u64(&self, addr: u64, width: u32) -> u64 {
        let mut v = 0u64;
        for i in 0..width {
            v |= (self.read_byte(addr.wrapping_add(i as u64)) as u64) << (8 * i);
        }
        v
    }

    pub fn write_u64(&mut self, addr: u64, value: u64, width: u32) {
        for i in 0..width {
            self.memory
                .insert(addr.wrapping_add(i as u64), (value >> (8 * i)) as u8);
        }
    }

    fn is_mapped(&self, addr: u64) -> bool {
        self.memory.contains_key(&addr)
    }
}

/// Outcome of one kernel-model syscall.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyscallOutcome {
    pub ret0: u64,
    pub ret1: u64,
    pub cost: u64,
    pub exit: bool,
    pub clone_child: Option<u64>,
}

/// Synthetic kernel: deterministic return pairs, a per-syscall cost in
/// abstract units standing in for the privilege transition, and a clone
/// policy handing out synthetic child ids.
#[derive(Debug, Clone)]
pub struct KernelModel {
    pub cost_units: u64,
    clone_counter: u64,
}

pub const DEFAULT_COST_UNITS: u64 = 2_000;

impl Default for KernelModel {
    fn default() -> Self {
        KernelModel::new(DEFAULT_COST_UNITS)
    }
}

impl KernelModel {
    pub fn new(cost_units: u64) -> Self {
        KernelModel {
            cost_units,
            clone_counter: 0,
        }
    }

    pub fn handle(&mut self, number: u64, args: [u64; 6]) -> SyscallOutcome {
        if is_exit_family(number) {
            return SyscallOutcome {
                ret0: args[0],
                ret1: 0,
                cost: self.cost_units,
                exit: true,
                clone_child: None,
            };
        }
        if is_clone_family(number) {
            self.clone_counter += 1;
            let child = 1_000 + self.clone_counter;
            return SyscallOutcome {
                ret0: child,
                ret1: 0,
                cost: self.cost_units,
                exit: false,
                clone_child: Some(child),
            };
        }
        // Arbitrary but pure mixing so return values depend on every input.
        let ret0 = number
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(args[0].rotate_left(7))
            ^ args[1];
        let ret1 = number.wrapping_add(args[2]).rotate_left(13) ^ args[3];
        SyscallOutcome {
            ret0,
            ret1,
            cost: self.cost_units,
            exit: false,
            clone_child: None,
        }
    }
}

/// Whether a syscall reached the kernel model directly or through the
/// interception runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyscallVia {
    Direct,
    Intercepted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HookDecision {
    Passthrough,
    Bypass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceEvent {
    Syscall {
        number: u64,
        args: [u64; 6],
        ret0: u64,
        ret1: u64,
        via: SyscallVia,
    },
    HookPre {
        number: u64,
        decision: HookDecision,
    },
    HookPost {
        number: u64,
    },
    PostClone {
        child: u64,
    },
    Break {
        key: u64,
    },
}

/// Ordered event record of one emulator run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub events: Vec<TraceEvent>,
    pub instret_total: u64,
    pub kernel_cost_total: u64,
}

impl ExecutionTrace {
    pub fn syscalls(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Syscall { .. }))
    }

    /// One JSON object per line, stable field order.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace event serializes"));
            out.push('\n');
        }
        out
    }
}

/// User hooks invoked by the interception runtime. The pre-hook may
/// bypass the kernel and supply the (a0, a1) return pair itself.
pub trait SyscallHooks {
    fn pre(&mut self, number: u64, args: &[u64; 6]) -> PreHookResult {
        let _ = (number, args);
        PreHookResult::Passthrough
    }
    fn post(&mut self, number: u64, ret0: u64, ret1: u64) {
        let _ = (number, ret0, ret1);
    }
    fn post_clone(&mut self, child: u64) {
        let _ = child;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreHookResult {
    Passthrough,
    Bypass { ret0: u64, ret1: u64 },
}

/// Hooks that forward every syscall unchanged.
#[derive(Debug, Default, Clone)]
pub struct PassthroughHooks;

impl SyscallHooks for PassthroughHooks {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkRegister {
    Ra,
    A7,
    T0,
}

impl LinkRegister {
    pub fn index(self) -> Reg {
        match self {
            LinkRegister::Ra => isa::reg::RA,
            LinkRegister::A7 => isa::reg::A7,
            LinkRegister::T0 => isa::reg::T0,
        }
    }
}

/// Per-patch facts the runtime needs for dispatch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchDispatchInfo {
    pub id: usize,
    pub link_register: LinkRegister,
    /// Link value left by the patch's redirect jump; the unique
    /// identification key observed at the entry point.
    pub key: u64,
    /// Start of this patch's relocated block.
    pub block_address: u64,
    /// Address of the in-block syscall gate (`ebreak`).
    pub gate_address: u64,
    /// Statically extracted syscall number, re-materialized into a7 for
    /// Small patches before any dispatch.
    pub rematerialize_a7: Option<u64>,
}

/// Host side of the interception protocol: dispatch-map lookup at the
/// entry gate, hook invocation and kernel forwarding at the block gates.
pub struct InterceptorRuntime {
    pub entry_gate: u64,
    pub dispatch: BTreeMap<u64, usize>,
    pub gates: BTreeMap<u64, usize>,
    pub patches: Vec<PatchDispatchInfo>,
    pub hooks: Box<dyn SyscallHooks>,
}

impl InterceptorRuntime {
    pub fn new(
        entry_gate: u64,
        patches: Vec<PatchDispatchInfo>,
        hooks: Box<dyn SyscallHooks>,
    ) -> Self {
        let dispatch = patches.iter().map(|p| (p.key, p.id)).collect();
        let gates = patches.iter().map(|p| (p.gate_address, p.id)).collect();
        InterceptorRuntime {
            entry_gate,
            dispatch,
            gates,
            patches,
            hooks,
        }
    }

    /// Resolve the identification key: the candidate link registers are
    /// examined in fixed order and must agree with the patch's declared
    /// link register.
    fn identify(&self, state: &MachineState) -> Option<usize> {
        for lr in [LinkRegister::Ra, LinkRegister::A7, LinkRegister::T0] {
            let key = state.reg(lr.index());
            if let Some(&id) = self.dispatch.get(&key) {
                if self.patches[id].link_register == lr {
                    return Some(id);
                }
            }
        }
        None
    }
}

/// One emulator run over a set of placed images.
pub struct Emulator {
    pub state: MachineState,
    pub kernel: KernelModel,
    pub runtime: Option<InterceptorRuntime>,
    pub trace: ExecutionTrace,
    pub limit: u64,
    halted: bool,
}

impl Emulator {
    pub fn new(kernel: KernelModel) -> Self {
        Emulator {
            state: MachineState::default(),
            kernel,
            runtime: None,
            trace: ExecutionTrace::default(),
            limit: DEFAULT_INSTRET_LIMIT,
            halted: false,
        }
    }

    pub fn load_image(&mut self, base: u64, bytes: &[u8]) {
        self.state.load_image(base, bytes);
    }

    pub fn install_interceptor(&mut self, runtime: InterceptorRuntime) {
        self.runtime = Some(runtime);
    }

    /// Run from `entry` until the halt sentinel, an exit-family syscall
    /// or the instruction limit.
    pub fn run(&mut self, entry: u64) -> Result<(), EmuError> {
        self.state.pc = entry;
        self.halted = false;
        let result = self.run_loop();
        self.trace.instret_total = self.state.instret;
        result
    }

    /// Run from `entry` until `stop` is reached (exclusive), the machine
    /// halts, or the instruction limit trips. Used by harnesses that
    /// exercise a single patch region in isolation.
    pub fn run_until(&mut self, entry: u64, stop: u64) -> Result<(), EmuError> {
        self.state.pc = entry;
        self.halted = false;
        let result = (|| {
            while !self.halted && self.state.pc != stop && self.state.pc != HALT_ADDRESS {
                if self.state.instret >= self.limit {
                    return Err(EmuError::LimitExceeded {
                        pc: self.state.pc,
                        limit: self.limit,
                    });
                }
                let insn = self.fetch()?;
                self.execute(insn)?;
            }
            Ok(())
        })();
        self.trace.instret_total = self.state.instret;
        result
    }

    fn run_loop(&mut self) -> Result<(), EmuError> {
        while !self.halted && self.state.pc != HALT_ADDRESS {
            if self.state.instret >= self.limit {
                return Err(EmuError::LimitExceeded {
                    pc: self.state.pc,
                    limit: self.limit,
                });
            }
            let insn = self.fetch()?;
            self.execute(insn)?;
        }
        Ok(())
    }

    fn fetch(&self) -> Result<Instruction, EmuError> {
        let pc = self.state.pc;
        if !pc.is_multiple_of(2) {
            return Err(EmuError::MisalignedPc { pc });
        }
        if !self.state.is_mapped(pc) {
            return Err(EmuError::UnmappedFetch { pc });
        }
        let bytes = [
            self.state.read_byte(pc),
            self.state.read_byte(pc + 1),
            self.state.read_byte(pc + 2),
            self.state.read_byte(pc + 3),
        ];
        decode(&bytes).map_err(|_| EmuError::UnmappedFetch { pc })
    }

    fn execute(&mut self, insn: Instruction) -> Result<(), EmuError> {
        match insn.kind {
            Kind::Ecall => {
                self.state.instret += 1;
                self.state.pc += 4;
                self.direct_syscall();
                Ok(())
            }
            Kind::Ebreak | Kind::CEbreak => {
                self.state.instret += 1;
                self.intercept(insn.width as u64)
            }
            _ => step(&mut self.state, &insn).map_err(|e| match e {
                StepFault::Illegal => EmuError::IllegalInstruction {
                    pc: self.state.pc,
                    raw: insn.raw,
                },
            }),
        }
    }

    fn direct_syscall(&mut self) {
        let number = self.state.reg(isa::reg::A7);
        let args = self.syscall_args();
        let out = self.kernel.handle(number, args);
        self.state.set_reg(isa::reg::A0, out.ret0);
        self.state.set_reg(isa::reg::A1, out.ret1);
        self.trace.kernel_cost_total += out.cost;
        self.trace.events.push(TraceEvent::Syscall {
            number,
            args,
            ret0: out.ret0,
            ret1: out.ret1,
            via: SyscallVia::Direct,
        });
        if let Some(child) = out.clone_child {
            self.trace.events.push(TraceEvent::PostClone { child });
        }
        if out.exit {
            self.halted = true;
        }
    }

    fn syscall_args(&self) -> [u64; 6] {
        let mut args = [0u64; 6];
        for (i, a) in args.iter_mut().enumerate() {
            *a = self.state.reg(isa::reg::A0 + i as u8);
        }
        args
    }

    fn hooks(&mut self) -> &mut Box<dyn SyscallHooks> {
        &mut self.runtime.as_mut().expect("gate implies runtime").hooks
    }

    fn intercept(&mut self, width: u64) -> Result<(), EmuError> {
        let pc = self.state.pc;
        let Some(runtime) = self.runtime.as_ref() else {
            return Err(EmuError::UnexpectedEbreak { pc });
        };
        if pc == runtime.entry_gate {
            // Entry gate: identify the patch by its unique return address
            // and hand control to its relocated block.
            let Some(id) = runtime.identify(&self.state) else {
                return Err(EmuError::DispatchFailure { pc });
            };
            let patch = runtime.patches[id].clone();
            self.trace.events.push(TraceEvent::Break { key: patch.key });
            if let Some(number) = patch.rematerialize_a7 {
                self.state.set_reg(isa::reg::A7, number);
            }
            self.state.pc = patch.block_address;
            return Ok(());
        }
        if !runtime.gates.contains_key(&pc) {
            return Err(EmuError::DispatchFailure { pc });
        }
        // In-block syscall gate: hooks, then kernel or bypass, with the
        // paired (a0, a1) return write.
        let number = self.state.reg(isa::reg::A7);
        let args = self.syscall_args();
        let decision = self.hooks().pre(number, &args);
        match decision {
            PreHookResult::Bypass { ret0, ret1 } => {
                self.trace.events.push(TraceEvent::HookPre {
                    number,
                    decision: HookDecision::Bypass,
                });
                self.state.set_reg(isa::reg::A0, ret0);
                self.state.set_reg(isa::reg::A1, ret1);
                self.hooks().post(number, ret0, ret1);
                self.trace.events.push(TraceEvent::HookPost { number });
                if is_clone_family(number) {
                    self.hooks().post_clone(ret0);
                    self.trace.events.push(TraceEvent::PostClone { child: ret0 });
                }
            }
            PreHookResult::Passthrough => {
                self.trace.events.push(TraceEvent::HookPre {
                    number,
                    decision: HookDecision::Passthrough,
                });
                let out = self.kernel.handle(number, args);
                self.state.set_reg(isa::reg::A0, out.ret0);
                self.state.set_reg(isa::reg::A1, out.ret1);
                self.trace.kernel_cost_total += out.cost;
                self.trace.events.push(TraceEvent::Syscall {
                    number,
                    args,
                    ret0: out.ret0,
                    ret1: out.ret1,
                    via: SyscallVia::Intercepted,
                });
                self.hooks().post(number, out.ret0, out.ret1);
                self.trace.events.push(TraceEvent::HookPost { number });
                if let Some(child) = out.clone_child {
                    self.hooks().post_clone(child);
                    self.trace.events.push(TraceEvent::PostClone { child });
                }
                if out.exit {
                    self.halted = true;
                }
            }
        }
        self.state.pc += width;
        Ok(())
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum StepFault {
    Illegal,
}

/// Execute one decoded instruction against `state`. Traps (ecall,
/// ebreak) are not handled here; the caller owns them.
pub fn step(state: &mut MachineState, insn: &Instruction) -> Result<(), StepFault> {
    use Kind::*;
    let pc = state.pc;
    let w = insn.width as u64;
    let mut next_pc = pc.wrapping_add(w);
    let rs1 = state.reg(insn.rs1);
    let rs2 = state.reg(insn.rs2);
    let imm = insn.imm;

    let wr = |state: &mut MachineState, v: u64| state.set_reg(insn.rd, v);

    match insn.kind {
        Lui | CLui => wr(state, imm as u64),
        CLi => wr(state, imm as u64),
        Auipc => wr(state, pc.wrapping_add(imm as u64)),
        Jal => {
            wr(state, pc.wrapping_add(4));
            next_pc = pc.wrapping_add(imm as u64);
        }
        CJ => next_pc = pc.wrapping_add(imm as u64),
        Jalr => {
            let target = rs1.wrapping_add(imm as u64) & !1;
            wr(state, pc.wrapping_add(4));
            next_pc = target;
        }
        CJr => next_pc = rs1 & !1,
        CJalr => {
            let target = rs1 & !1;
            state.set_reg(isa::reg::RA, pc.wrapping_add(2));
            next_pc = target;
        }
        Beq | Bne | Blt | Bge | Bltu | Bgeu => {
            let taken = match insn.kind {
                Beq => rs1 == rs2,
                Bne => rs1 != rs2,
                Blt => (rs1 as i64) < (rs2 as i64),
                Bge => (rs1 as i64) >= (rs2 as i64),
                Bltu => rs1 < rs2,
                _ => rs1 >= rs2,
            };
            if taken {
                next_pc = pc.wrapping_add(imm as u64);
            }
        }
        CBeqz => {
            if rs1 == 0 {
                next_pc = pc.wrapping_add(imm as u64);
            }
        }
        CBnez => {
            if rs1 != 0 {
                next_pc = pc.wrapping_add(imm as u64);
            }
        }
        Lb => wr(state, state.read_u64(rs1.wrapping_add(imm as u64), 1) as i8 as i64 as u64),
        Lh => wr(state, state.read_u64(rs1.wrapping_add(imm as u64), 2) as i16 as i64 as u64),
        Lw | CLw | CLwsp => {
            wr(state, state.read_u64(rs1.wrapping_add(imm as u64), 4) as i32 as i64 as u64)
        }
        Ld | CLd | CLdsp => wr(state, state.read_u64(rs1.wrapping_add(imm as u64), 8)),
        Lbu => wr(state, state.read_u64(rs1.wrapping_add(imm as u64), 1)),
        Lhu => wr(state, state.read_u64(rs1.wrapping_add(imm as u64), 2)),
        Lwu => wr(state, state.read_u64(rs1.wrapping_add(imm as u64), 4)),
        Sb => state.write_u64(rs1.wrapping_add(imm as u64), rs2, 1),
        Sh => state.write_u64(rs1.wrapping_add(imm as u64), rs2, 2),
        Sw | CSw | CSwsp => state.write_u64(rs1.wrapping_add(imm as u64), rs2, 4),
        Sd | CSd | CSdsp => state.write_u64(rs1.wrapping_add(imm as u64), rs2, 8),
        Addi | CAddi | CAddi16sp => wr(state, rs1.wrapping_add(imm as u64)),
        CAddi4spn => wr(state, rs1.wrapping_add(imm as u64)),
        CNop => {}
        Slti => wr(state, ((rs1 as i64) < imm) as u64),
        Sltiu => wr(state, (rs1 < imm as u64) as u64),
        Xori => wr(state, rs1 ^ imm as u64),
        Ori => wr(state, rs1 | imm as u64),
        Andi | CAndi => wr(state, rs1 & imm as u64),
        Slli | CSlli => wr(state, rs1 << (imm as u32 & 63)),
        Srli | CSrli => wr(state, rs1 >> (imm as u32 & 63)),
        Srai | CSrai => wr(state, ((rs1 as i64) >> (imm as u32 & 63)) as u64),
        Addiw | CAddiw => wr(state, (rs1 as i32).wrapping_add(imm as i32) as i64 as u64),
        Slliw => wr(state, ((rs1 as i32) << (imm as u32 & 31)) as i64 as u64),
        Srliw => wr(state, (((rs1 as u32) >> (imm as u32 & 31)) as i32) as i64 as u64),
        Sraiw => wr(state, ((rs1 as i32) >> (imm as u32 & 31)) as i64 as u64),
        Add | CAdd => wr(state, rs1.wrapping_add(rs2)),
        CMv => wr(state, rs2),
        Sub | CSub => wr(state, rs1.wrapping_sub(rs2)),
        Sll => wr(state, rs1 << (rs2 & 63)),
        Slt => wr(state, ((rs1 as i64) < (rs2 as i64)) as u64),
        Sltu => wr(state, (rs1 < rs2) as u64),
        Xor | CXor => wr(state, rs1 ^ rs2),
        Srl => wr(state, rs1 >> (rs2 & 63)),
        Sra => wr(state, ((rs1 as i64) >> (rs2 & 63)) as u64),
        Or | COr => wr(state, rs1 | rs2),
        And | CAnd => wr(state, rs1 & rs2),
        Addw | CAddw => wr(state, (rs1 as i32).wrapping_add(rs2 as i32) as i64 as u64),
        Subw | CSubw => wr(state, (rs1 as i32).wrapping_sub(rs2 as i32) as i64 as u64),
        Sllw => wr(state, ((rs1 as i32) << (rs2 & 31)) as i64 as u64),
        Srlw => wr(state, (((rs1 as u32) >> (rs2 & 31)) as i32) as i64 as u64),
        Sraw => wr(state, ((rs1 as i32) >> (rs2 & 31)) as i64 as u64),
        Mul => wr(state, rs1.wrapping_mul(rs2)),
        Mulh => wr(state, (((rs1 as i64 as i128) * (rs2 as i64 as i128)) >> 64) as u64),
        Mulhsu => wr(state, (((rs1 as i64 as i128) * (rs2 as u128 as i128)) >> 64) as u64),
        Mulhu => wr(state, (((rs1 as u128) * (rs2 as u128)) >> 64) as u64),
        Div => wr(
            state,
            if rs2 == 0 {
                u64::MAX
            } else {
                (rs1 as i64).wrapping_div(rs2 as i64) as u64
            },
        ),
        Divu => wr(state, rs1.checked_div(rs2).unwrap_or(u64::MAX)),
        Rem => wr(
            state,
            if rs2 == 0 {
                rs1
            } else {
                (rs1 as i64).wrapping_rem(rs2 as i64) as u64
            },
        ),
        Remu => wr(state, if rs2 == 0 { rs1 } else { rs1 % rs2 }),
        Mulw => wr(state, (rs1 as i32).wrapping_mul(rs2 as i32) as i64 as u64),
        Divw => wr(
            state,
            if rs2 as i32 == 0 {
                u64::MAX
            } else {
                (rs1 as i32).wrapping_div(rs2 as i32) as i64 as u64
            },
        ),
        Divuw => wr(
            state,
            (rs1 as u32)
                .checked_div(rs2 as u32)
                .map_or(u64::MAX, |q| q as i32 as i64 as u64),
        ),
        Remw => wr(
            state,
            if rs2 as i32 == 0 {
                (rs1 as i32) as i64 as u64
            } else {
                (rs1 as i32).wrapping_rem(rs2 as i32) as i64 as u64
            },
        ),
        Remuw => wr(
            state,
            if rs2 as u32 == 0 {
                ((rs1 as u32) as i32) as i64 as u64
            } else {
                ((rs1 as u32 % rs2 as u32) as i32) as i64 as u64
            },
        ),
        Fence | FenceI => {}
        Ecall | Ebreak | CEbreak => return Err(StepFault::Illegal),
        Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci | Unknown => {
            return Err(StepFault::Illegal)
        }
    }

    state.pc = next_pc;
    state.instret += 1;
    Ok(())
}
