//! Exact interpreter for concrete programs. Its semantics coincide with the
//! lifted machine run on point-mass parameters.

use super::program::{ConcreteProgram, DLine, DLoop, Decoded};
use crate::error::{Error, Result};
use crate::machine::{encode_concrete, Dist, Domains, HeapCell, InstrKind, MachineState, Register, ValueType};
use crate::models::{Block, ClosureVar, Combinator, Layout};
use crate::value::{Input, Output, OutputKind};

/// A concrete register; untyped machines only use the first slot.
pub type Reg = [usize; 3];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcreteState {
    pub domains: Domains,
    pub regs: Vec<Reg>,
    /// `(data, next)` for addresses `1..=h`.
    pub heap: Vec<(usize, usize)>,
    /// Current line, `program_len` meaning halted (assembly only).
    pub ip: Option<usize>,
    pub program_len: usize,
    pub sp: Option<usize>,
    pub cursor: usize,
    pub t: usize,
}

/// Final state of a run together with the output register.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Execution {
    pub state: ConcreteState,
    pub output: Reg,
}

impl Execution {
    pub fn decode(&self, kind: OutputKind) -> Option<Output> {
        self.state.decode(&self.output, kind)
    }
}

impl ConcreteState {
    fn slot(&self, ty: ValueType) -> usize {
        self.domains.slot(ty)
    }

    fn get(&self, r: &Reg, ty: ValueType) -> usize {
        r[self.slot(ty)]
    }

    fn value_reg(&self, ty: ValueType, v: usize) -> Reg {
        let mut r = [0; 3];
        r[self.slot(ty)] = v;
        r
    }

    fn cell(&self, ptr: usize) -> (usize, usize) {
        if self.domains.is_null(ptr) {
            (0, 0)
        } else {
            self.heap[ptr - 1]
        }
    }

    /// Decode a register as a program output; `None` when a list does not
    /// terminate within `h` cells.
    pub fn decode(&self, reg: &Reg, kind: OutputKind) -> Option<Output> {
        match kind {
            OutputKind::Scalar => Some(Output::Scalar(self.get(reg, ValueType::Int))),
            OutputKind::Bool => Some(Output::Scalar(self.get(reg, ValueType::Bool))),
            OutputKind::List => {
                let mut ptr = self.get(reg, ValueType::Ptr);
                let mut out = vec![];
                while !self.domains.is_null(ptr) {
                    if out.len() >= self.domains.h {
                        return None;
                    }
                    let (d, n) = self.heap[ptr - 1];
                    out.push(d);
                    ptr = n;
                }
                Some(Output::List(out))
            }
        }
    }

    /// The same state as point-mass distributions.
    pub fn to_machine_state(&self) -> MachineState {
        let dom = self.domains;
        let sizes = dom.slot_sizes();
        let reg = |r: &Reg| Register {
            slots: sizes.iter().enumerate().map(|(s, &n)| Dist::point(n, r[s])).collect(),
        };
        MachineState {
            domains: dom,
            ip: self.ip.map(|p| Dist::point(self.program_len + 1, p)),
            registers: self.regs.iter().map(reg).collect(),
            heap: self
                .heap
                .iter()
                .map(|&(d, n)| HeapCell {
                    data: Dist::point(dom.size(ValueType::Int), d),
                    next: Dist::point(dom.size(ValueType::Ptr), n),
                })
                .collect(),
            sp: self.sp.map(|s| Dist::point(dom.h + 2, s)),
            t: self.t,
        }
    }

    pub fn output_reg(&self, r: usize) -> Register {
        self.lift_reg(&self.regs[r])
    }

    /// A register value as point-mass distributions.
    pub fn lift_reg(&self, reg: &Reg) -> Register {
        let sizes = self.domains.slot_sizes();
        Register {
            slots: sizes
                .iter()
                .enumerate()
                .map(|(s, &n)| Dist::point(n, reg[s]))
                .collect(),
        }
    }

    fn alloc(&self) -> Result<usize> {
        let addr = match self.sp {
            Some(sp) => sp,
            None => self.cursor + 1 + self.t,
        };
        if addr > self.domains.h {
            return Err(Error::InvalidModel(format!("allocation address {addr} outside the heap")));
        }
        Ok(addr)
    }

    fn cons(&mut self, a1: &Reg, a2: &Reg) -> Result<()> {
        let addr = self.alloc()?;
        self.heap[addr - 1] = (self.get(a1, ValueType::Int), self.get(a2, ValueType::Ptr));
        if let Some(sp) = &mut self.sp {
            *sp += 1;
        }
        Ok(())
    }

    /// Result of one instruction, `None` for kinds without a value.
    fn eval(&self, line: &DLine) -> Result<Option<Reg>> {
        use InstrKind::*;
        let dom = self.domains;
        let a1 = &self.regs[line.arg1];
        let a2 = &self.regs[line.arg2];
        let n = dom.size(ValueType::Int);
        let int = |r: &Reg| self.get(r, ValueType::Int);
        let truthy = |r: &Reg| self.get(r, ValueType::Bool) != 0;
        let b = |x: bool| Some(self.value_reg(ValueType::Bool, x as usize));
        let i = |x: usize| Some(self.value_reg(ValueType::Int, x));
        Ok(match line.kind {
            Cons => Some(self.value_reg(ValueType::Ptr, self.alloc()?)),
            Head => i(self.cell(self.get(a1, ValueType::Ptr)).0),
            Tail => Some(self.value_reg(ValueType::Ptr, self.cell(self.get(a1, ValueType::Ptr)).1)),
            Add => i((int(a1) + int(a2)) % n),
            Inc => i((int(a1) + 1) % n),
            Dec => i((int(a1) + n - 1) % n),
            Eq => b(int(a1) == int(a2)),
            Gt => b(int(a1) > int(a2)),
            And => b(truthy(a1) && truthy(a2)),
            Or => b(truthy(a1) || truthy(a2)),
            Zero => i(0),
            One => i(1 % n),
            Ite => {
                let c = &self.regs[line.cond.ok_or(Error::Arity {
                    kind: "ite",
                    expected: 3,
                    got: 2,
                })?];
                let holds = if dom.typed {
                    c[ValueType::Bool.slot()] == 1
                } else {
                    c[0] != 0
                };
                Some(if holds { *a1 } else { *a2 })
            }
            Noop | Jz | Jnz | Return => None,
        })
    }

    /// Execute a line of a structured program. Inactive lines of immutable
    /// machines still write their register but do not allocate.
    fn exec_structured(&mut self, line: &DLine, active: bool) -> Result<()> {
        let value = self.eval(line)?;
        let a1 = self.regs[line.arg1];
        let a2 = self.regs[line.arg2];
        match line.target {
            Some(t) => {
                self.regs[t] = value.unwrap_or([0; 3]);
                if active && line.kind == InstrKind::Cons {
                    self.cons(&a1, &a2)?;
                }
            }
            None if active => {
                if let (Some(v), Some(out)) = (value, line.out) {
                    self.regs[out] = v;
                }
                if line.kind == InstrKind::Cons {
                    self.cons(&a1, &a2)?;
                }
            }
            None => {}
        }
        self.t += 1;
        Ok(())
    }

    fn assembly_step(&mut self, lines: &[DLine], ret_reg: usize) -> Result<()> {
        let p = self.ip.expect("assembly state");
        if p < lines.len() {
            let line = &lines[p];
            let value = self.eval(line)?;
            let a1 = self.regs[line.arg1];
            let a2 = self.regs[line.arg2];
            if let (Some(v), Some(out)) = (value, line.out) {
                self.regs[out] = v;
            }
            if line.kind == InstrKind::Cons {
                self.cons(&a1, &a2)?;
            }
            let zero = self.get(&a1, ValueType::Int) == 0;
            let branch = line.branch.unwrap_or(0);
            self.ip = Some(match line.kind {
                InstrKind::Jz if zero => branch,
                InstrKind::Jnz if !zero => branch,
                InstrKind::Return => {
                    self.regs[ret_reg] = a1;
                    lines.len()
                }
                _ => p + 1,
            });
        }
        self.t += 1;
        Ok(())
    }

    fn run_loop(&mut self, layout: &Layout, lp: &DLoop, body: &[DLine]) -> Result<Option<Reg>> {
        let spec = &layout.spec;
        let (len, nbody) = (spec.max_list_len, spec.body);
        let zip = lp.combinator == Some(Combinator::ZipWithi);
        let start_t = self.t;
        let ptr_of = |s: &Self, r: usize| s.get(&s.regs[r], ValueType::Ptr);
        let mut ptr1 = ptr_of(self, lp.list1);
        let mut ptr2 = if zip {
            Some(ptr_of(self, lp.list2.expect("list2")))
        } else {
            None
        };
        let mut acc = match lp.combinator {
            Some(Combinator::Foldli) => self.regs[lp.acc_init.expect("acc_init")],
            _ => [0; 3],
        };
        let out_base = self.cursor + 1 + spec.total_timesteps();
        let mut result_ptr = 0;
        let dom = self.domains;
        for i in 0..len {
            let active = !dom.is_null(ptr1) && ptr2.is_none_or(|p| !dom.is_null(p));
            let (ele, next1) = self.cell(ptr1);
            let (ele2, next2) = ptr2.map_or((0, 0), |p| self.cell(p));
            let set = |s: &mut Self, v: ClosureVar, val: Reg| {
                if let Some(r) = layout.closure_reg(v) {
                    s.regs[r] = val;
                }
            };
            set(self, ClosureVar::Ele, self.value_reg(ValueType::Int, ele));
            set(self, ClosureVar::Ele2, self.value_reg(ValueType::Int, ele2));
            set(self, ClosureVar::Acc, acc);
            set(self, ClosureVar::Idx, self.value_reg(ValueType::Int, i));
            self.t = start_t + i * nbody;
            for line in body {
                self.exec_structured(line, active)?;
            }
            if let Some(c) = lp.combinator {
                let res = self.regs[lp.body_result.expect("body_result")];
                match c {
                    Combinator::Foldli => {
                        if active {
                            acc = res;
                        }
                    }
                    Combinator::Mapi | Combinator::ZipWithi => {
                        let addr = out_base + i;
                        let link = if active { addr } else { 0 };
                        self.heap[addr - 1].0 = if active { self.get(&res, ValueType::Int) } else { 0 };
                        if i == 0 {
                            result_ptr = link;
                        } else {
                            self.heap[addr - 2].1 = link;
                        }
                    }
                }
            }
            ptr1 = next1;
            ptr2 = ptr2.map(|_| next2);
        }
        self.t = start_t + len * nbody;
        Ok(match lp.combinator {
            None => None,
            Some(Combinator::Foldli) => Some(acc),
            Some(_) => Some(self.value_reg(ValueType::Ptr, result_ptr)),
        })
    }
}

/// Initial state holding the encoded inputs.
pub fn initial_state(layout: &Layout, inputs: &[Input]) -> Result<ConcreteState> {
    let spec = &layout.spec;
    let kinds: Vec<_> = inputs.iter().map(Input::kind).collect();
    if kinds != spec.inputs {
        return Err(Error::InvalidInput(format!(
            "inputs {kinds:?} do not match the model signature {:?}",
            spec.inputs
        )));
    }
    let dom = layout.domains;
    let enc = encode_concrete(inputs, &dom, layout.initial_regs(), spec.max_list_len)?;
    let mut regs: Vec<Reg> = enc
        .registers
        .iter()
        .map(|r| {
            let mut x = [0; 3];
            x[..r.len()].copy_from_slice(r);
            x
        })
        .collect();
    regs.resize(layout.regs.len(), [0; 3]);
    let assembly = spec.variant.is_assembly();
    Ok(ConcreteState {
        domains: dom,
        regs,
        heap: enc.heap,
        ip: assembly.then_some(0),
        program_len: spec.program_len,
        sp: spec.variant.has_stack_pointer().then_some(enc.cursor + 1),
        cursor: enc.cursor,
        t: 0,
    })
}

/// Run a decoded program on one input.
pub fn execute(layout: &Layout, program: &Decoded, inputs: &[Input]) -> Result<Execution> {
    let spec = &layout.spec;
    let mut state = initial_state(layout, inputs)?;
    if spec.variant.is_assembly() {
        let out = spec.registers - 1;
        for _ in 0..spec.timesteps {
            state.assembly_step(&program.lines, out)?;
        }
        let output = state.regs[out];
        return Ok(Execution { state, output });
    }
    for line in program.block(Block::Prefix) {
        state.exec_structured(line, true)?;
    }
    if let Some(lp) = &program.loop_ {
        let body: Vec<DLine> = program.block(Block::Body).copied().collect();
        if let Some(res) = state.run_loop(layout, lp, &body)? {
            if let Some(r) = layout.loop_result_reg() {
                state.regs[r] = res;
            } else if let Some(u) = lp.loop_out {
                state.regs[u] = res;
            }
        }
    }
    for line in program.block(Block::Suffix) {
        state.exec_structured(line, true)?;
    }
    let output = match (layout.output_reg(), program.ret) {
        (Some(r), _) => state.regs[r],
        (None, Some(r)) => state.regs[r],
        (None, None) => return Err(Error::InvalidModel("no output register".into())),
    };
    Ok(Execution { state, output })
}

/// Run a concrete program and decode its output.
pub fn run_program(
    layout: &Layout,
    program: &ConcreteProgram,
    inputs: &[Input],
    kind: OutputKind,
) -> Result<Option<Output>> {
    let decoded = program.decode(layout)?;
    Ok(execute(layout, &decoded, inputs)?.decode(kind))
}
