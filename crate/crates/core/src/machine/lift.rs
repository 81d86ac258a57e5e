//! Lifted instruction semantics: every value is a distribution held on an
//! autodiff tape, and every instruction computes the exact expectation of its
//! discrete counterpart under independent argument distributions.

use std::collections::{BTreeMap, HashMap};

use super::dist::Dist;
use super::instr::{InstrKind, Produces, ValueType};
use super::state::{Domains, HeapCell, MachineState, Register};
use crate::autodiff::{Comparison, Logic, MixTerm, NodeId, Tape};
use crate::error::{Error, Result};

/// A register on the tape: one node per slot.
#[derive(Clone, Debug, PartialEq)]
pub struct LReg {
    pub slots: Vec<NodeId>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LCell {
    pub data: NodeId,
    pub next: NodeId,
}

/// A learnable choice among registers: `dist[i]` is the probability of
/// reading `regs[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegChoice {
    pub dist: NodeId,
    pub regs: Vec<usize>,
}

/// Parameter distributions of one program line.
#[derive(Clone, Debug, PartialEq)]
pub struct LineParams {
    pub kinds: Vec<InstrKind>,
    pub instr: NodeId,
    /// Target register (mutable machines only).
    pub out: Option<RegChoice>,
    pub arg1: RegChoice,
    pub arg2: RegChoice,
    pub cond: Option<RegChoice>,
    /// Jump target over program lines (assembly only).
    pub branch: Option<NodeId>,
}

impl LineParams {
    pub fn kind_index(&self, kind: InstrKind) -> Option<usize> {
        self.kinds.iter().position(|&k| k == kind)
    }
}

/// How strongly a line executes.
#[derive(Clone, Copy, Debug)]
pub enum Activation {
    Always,
    /// Scaled by a scalar node (loop iteration gates).
    Scalar(NodeId),
    /// Scaled by one entry of a distribution (the instruction pointer).
    Entry(NodeId, usize),
}

/// Heap of the lifted machine.
#[derive(Clone, Debug)]
pub enum LiftedHeap {
    /// One cell per address `1..=h`; cells are written at most once.
    Fixed(Vec<LCell>),
    Stack(StackHeap),
}

/// Heap allocated through a stack pointer that is itself uncertain.
///
/// Cell contents are tracked jointly with the stack pointer: `joint[(s, k)]`
/// is the unnormalized content of cell `k` restricted to runs in which the
/// stack pointer currently equals `s` (mass `sp[s]`). Marginal cells are
/// derived from it on demand.
#[derive(Clone, Debug)]
pub struct StackHeap {
    base: Vec<LCell>,
    sp0: usize,
    pub sp: NodeId,
    max_sp: usize,
    joint: BTreeMap<(usize, usize), LCell>,
    marginal: Option<Vec<LCell>>,
}

/// Lifted machine state.
#[derive(Clone, Debug)]
pub struct LiftedState {
    pub regs: Vec<LReg>,
    pub heap: LiftedHeap,
    /// Distribution over lines plus a final halt bucket (assembly only).
    pub ip: Option<NodeId>,
    /// Last address occupied by the inputs.
    pub cursor: usize,
    pub t: usize,
    /// Number of writes received by each register.
    pub writes: Vec<u32>,
}

/// Intermediate values of one evaluated line.
pub struct LineEval {
    pub a1: LReg,
    pub a2: LReg,
    /// Result per instruction kind, `None` for kinds without a value.
    pub results: Vec<Option<LReg>>,
}

/// Per-line values needed to route the instruction pointer.
pub struct Executed {
    pub weights: NodeId,
    pub a1: LReg,
}

/// Builds lifted computations on a tape.
pub struct Lifter<'t> {
    pub tape: &'t mut Tape,
    pub dom: Domains,
    points: HashMap<(usize, usize), NodeId>,
    zero_vecs: HashMap<usize, NodeId>,
}

fn mt(weight: NodeId, index: usize, value: NodeId) -> MixTerm {
    MixTerm::new(weight, index, value)
}

impl<'t> Lifter<'t> {
    pub fn new(tape: &'t mut Tape, dom: Domains) -> Self {
        Lifter {
            tape,
            dom,
            points: HashMap::new(),
            zero_vecs: HashMap::new(),
        }
    }

    pub fn point(&mut self, size: usize, value: usize) -> NodeId {
        if let Some(&n) = self.points.get(&(size, value)) {
            return n;
        }
        let mut v = vec![0.0; size];
        v[value] = 1.0;
        let n = self.tape.constant(&v);
        self.points.insert((size, value), n);
        n
    }

    pub fn zeros(&mut self, size: usize) -> NodeId {
        if let Some(&n) = self.zero_vecs.get(&size) {
            return n;
        }
        let n = self.tape.constant(&vec![0.0; size]);
        self.zero_vecs.insert(size, n);
        n
    }

    /// The scalar constant 1.
    pub fn unit(&mut self) -> NodeId {
        self.point(1, 0)
    }

    pub fn mix(&mut self, terms: Vec<MixTerm>) -> Result<NodeId> {
        Ok(self.tape.mix(terms)?)
    }

    pub fn size(&self, ty: ValueType) -> usize {
        self.dom.size(ty)
    }

    pub fn slot_of<'r>(&self, reg: &'r LReg, ty: ValueType) -> NodeId {
        reg.slots[self.dom.slot(ty)]
    }

    /// Register holding point masses `values` (one per slot).
    pub fn const_reg(&mut self, values: &[usize]) -> LReg {
        let sizes = self.dom.slot_sizes();
        LReg {
            slots: values
                .iter()
                .zip(sizes)
                .map(|(&v, n)| self.point(n, v))
                .collect(),
        }
    }

    pub fn zero_reg(&mut self) -> LReg {
        let zeros = vec![0; self.dom.slot_count()];
        self.const_reg(&zeros)
    }

    /// Register whose `ty` slot is `node`; other slots hold zero.
    pub fn value_reg(&mut self, ty: ValueType, node: NodeId) -> LReg {
        let mut reg = self.zero_reg();
        reg.slots[self.dom.slot(ty)] = node;
        reg
    }

    pub fn reg_from_dists(&mut self, reg: &Register) -> LReg {
        LReg {
            slots: reg
                .slots
                .iter()
                .map(|d| match d.as_point() {
                    Some(v) => self.point(d.domain_size(), v),
                    None => self.tape.constant(d.probs()),
                })
                .collect(),
        }
    }

    pub fn cell_from_dists(&mut self, cell: &HeapCell) -> LCell {
        let mut node = |d: &Dist| match d.as_point() {
            Some(v) => self.point(d.domain_size(), v),
            None => self.tape.constant(d.probs()),
        };
        LCell {
            data: node(&cell.data),
            next: node(&cell.next),
        }
    }

    /// `sum_i dist[i] * regs[choice.regs[i]]`, slot by slot.
    pub fn read(&mut self, choice: &RegChoice, regs: &[LReg]) -> Result<LReg> {
        let terms: Vec<(NodeId, usize, &LReg)> = choice
            .regs
            .iter()
            .enumerate()
            .map(|(i, &r)| (choice.dist, i, &regs[r]))
            .collect();
        self.weighted_regs(&terms)
    }

    /// Weighted sum of registers, slot by slot.
    pub fn weighted_regs(&mut self, terms: &[(NodeId, usize, &LReg)]) -> Result<LReg> {
        let slots = (0..self.dom.slot_count())
            .map(|s| {
                let t = terms.iter().map(|&(w, i, r)| mt(w, i, r.slots[s])).collect();
                self.mix(t)
            })
            .collect::<Result<_>>()?;
        Ok(LReg { slots })
    }

    /// Probability that a value reads as false (equals zero).
    pub fn falsy(&mut self, x: NodeId) -> Result<NodeId> {
        Ok(self.tape.select(x, &[0])?)
    }

    /// Probability that a pointer-slot value is null.
    pub fn null_prob(&mut self, ptr: NodeId) -> Result<NodeId> {
        let nulls = self.dom.null_values();
        let sel = self.tape.select(ptr, &nulls)?;
        Ok(if nulls.len() == 1 {
            sel
        } else {
            self.tape.sum(sel)
        })
    }

    /// Follow a pointer into the heap: `sum_k P(ptr = k) * field(cell_k)`,
    /// with null pointers yielding zero.
    fn deref(&mut self, ptr: NodeId, cells: &[LCell], next: bool) -> Result<NodeId> {
        let size = if next {
            self.size(ValueType::Ptr)
        } else {
            self.size(ValueType::Int)
        };
        let zero = self.point(size, 0);
        let mut terms: Vec<MixTerm> = self
            .dom
            .null_values()
            .into_iter()
            .map(|v| mt(ptr, v, zero))
            .collect();
        for (k, cell) in cells.iter().enumerate() {
            terms.push(mt(ptr, k + 1, if next { cell.next } else { cell.data }));
        }
        self.mix(terms)
    }

    pub fn head(&mut self, ptr: NodeId, cells: &[LCell]) -> Result<NodeId> {
        self.deref(ptr, cells, false)
    }

    pub fn tail(&mut self, ptr: NodeId, cells: &[LCell]) -> Result<NodeId> {
        self.deref(ptr, cells, true)
    }

    /// `ite` on whole registers: `a1` where `cond` is true, `a2` elsewhere.
    pub fn ite(&mut self, cond: &LReg, a1: &LReg, a2: &LReg) -> Result<LReg> {
        if self.dom.typed {
            let c = self.slot_of(cond, ValueType::Bool);
            self.weighted_regs(&[(c, 1, a1), (c, 0, a2)])
        } else {
            let f = self.falsy(cond.slots[0])?;
            let t = self.tape.complement(f);
            self.weighted_regs(&[(t, 0, a1), (f, 0, a2)])
        }
    }

    fn bool_result(&mut self, node: NodeId) -> LReg {
        self.value_reg(ValueType::Bool, node)
    }

    /// Result register of one instruction kind.
    pub fn instruction(
        &mut self,
        kind: InstrKind,
        a1: &LReg,
        a2: &LReg,
        cond: Option<&LReg>,
        cells: &[LCell],
        alloc: NodeId,
    ) -> Result<Option<LReg>> {
        use InstrKind::*;
        let int = |l: &Self, r: &LReg| l.slot_of(r, ValueType::Int);
        let ptr = |l: &Self, r: &LReg| l.slot_of(r, ValueType::Ptr);
        let boolean = |l: &Self, r: &LReg| l.slot_of(r, ValueType::Bool);
        let bool_len = self.size(ValueType::Bool);
        let int_size = self.size(ValueType::Int);
        let reg = match kind {
            Cons => self.value_reg(ValueType::Ptr, alloc),
            Head => {
                let v = self.head(ptr(self, a1), cells)?;
                self.value_reg(ValueType::Int, v)
            }
            Tail => {
                let v = self.tail(ptr(self, a1), cells)?;
                self.value_reg(ValueType::Ptr, v)
            }
            Add => {
                let v = self.tape.add_mod(int(self, a1), int(self, a2))?;
                self.value_reg(ValueType::Int, v)
            }
            Inc => {
                let v = self.tape.rotate(int(self, a1), 1);
                self.value_reg(ValueType::Int, v)
            }
            Dec => {
                let v = self.tape.rotate(int(self, a1), int_size - 1);
                self.value_reg(ValueType::Int, v)
            }
            Eq | Gt => {
                let c = if kind == Eq {
                    Comparison::Eq
                } else {
                    Comparison::Gt
                };
                let v = self
                    .tape
                    .compare(int(self, a1), int(self, a2), c, bool_len)?;
                self.bool_result(v)
            }
            And | Or => {
                let l = if kind == And { Logic::And } else { Logic::Or };
                let v = self
                    .tape
                    .logic(boolean(self, a1), boolean(self, a2), l, bool_len)?;
                self.bool_result(v)
            }
            Zero => {
                let v = self.point(int_size, 0);
                self.value_reg(ValueType::Int, v)
            }
            One => {
                let v = self.point(int_size, 1 % int_size);
                self.value_reg(ValueType::Int, v)
            }
            Ite => {
                let cond = cond.ok_or(Error::Arity {
                    kind: "ite",
                    expected: 3,
                    got: 2,
                })?;
                self.ite(cond, a1, a2)?
            }
            Noop | Jz | Jnz | Return => return Ok(None),
        };
        Ok(Some(reg))
    }

    /// Read a line's arguments and compute the result of every kind.
    pub fn eval_line(
        &mut self,
        line: &LineParams,
        regs: &[LReg],
        cells: &[LCell],
        alloc: NodeId,
    ) -> Result<LineEval> {
        let a1 = self.read(&line.arg1, regs)?;
        let a2 = self.read(&line.arg2, regs)?;
        let cond = match &line.cond {
            Some(c) if line.kinds.contains(&InstrKind::Ite) => Some(self.read(c, regs)?),
            _ => None,
        };
        let results = line
            .kinds
            .iter()
            .map(|&k| self.instruction(k, &a1, &a2, cond.as_ref(), cells, alloc))
            .collect::<Result<_>>()?;
        Ok(LineEval { a1, a2, results })
    }

    /// `sum_k weights[k] * result_k` over kinds that write a value. With
    /// `noop_writes_zero`, `noop` contributes an all-zero register.
    pub fn combine(
        &mut self,
        weights: NodeId,
        line: &LineParams,
        eval: &LineEval,
        noop_writes_zero: bool,
    ) -> Result<LReg> {
        let zero = self.zero_reg();
        let mut terms: Vec<(NodeId, usize, &LReg)> = vec![];
        for (k, (kind, res)) in line.kinds.iter().zip(&eval.results).enumerate() {
            match res {
                Some(r) => terms.push((weights, k, r)),
                None if *kind == InstrKind::Noop && noop_writes_zero => {
                    terms.push((weights, k, &zero))
                }
                None => {}
            }
        }
        self.weighted_regs(&terms)
    }

    /// Sum of `weights[k]` over the given kind indices, as a scalar.
    pub fn mass(&mut self, weights: NodeId, indices: &[usize]) -> Result<NodeId> {
        let unit = self.unit();
        if indices.is_empty() {
            return Ok(self.zeros(1));
        }
        self.mix(indices.iter().map(|&k| mt(weights, k, unit)).collect())
    }

    fn activate(&mut self, act: Activation, instr: NodeId) -> Result<NodeId> {
        Ok(match act {
            Activation::Always => instr,
            Activation::Scalar(g) => self.mix(vec![mt(g, 0, instr)])?,
            Activation::Entry(d, i) => self.mix(vec![mt(d, i, instr)])?,
        })
    }

    /// Execute lines that write into mutable registers through their `out`
    /// choice. Every line's effect is weighted by its activation; `ret_reg`
    /// receives the argument of `return`.
    pub fn exec_mutable(
        &mut self,
        state: &mut LiftedState,
        lines: &[(&LineParams, Activation)],
        ret_reg: Option<usize>,
    ) -> Result<Vec<Executed>> {
        let cells = state.heap.cells(self)?;
        let alloc = state.heap.alloc_ptr(self, state.cursor + 1 + state.t)?;
        let mut combined = vec![];
        let mut execs = vec![];
        for &(line, act) in lines {
            let w = self.activate(act, line.instr)?;
            let eval = self.eval_line(line, &state.regs, &cells, alloc)?;
            let writing: Vec<usize> = line
                .kinds
                .iter()
                .enumerate()
                .filter(|(_, k)| matches!(k.produces(), Produces::Value(_) | Produces::Copy))
                .map(|(i, _)| i)
                .collect();
            let value = self.combine(w, line, &eval, false)?;
            let mass = self.mass(w, &writing)?;
            combined.push((line, w, eval, value, mass));
        }
        let unit = self.unit();
        let nregs = state.regs.len();
        for u in 0..nregs {
            let mut keep_terms = vec![];
            let mut slot_terms: Vec<Vec<MixTerm>> = vec![vec![]; self.dom.slot_count()];
            for (line, w, eval, value, mass) in &combined {
                if let Some(out) = &line.out {
                    if let Some(i) = out.regs.iter().position(|&r| r == u) {
                        keep_terms.push(mt(out.dist, i, *mass));
                        for (s, terms) in slot_terms.iter_mut().enumerate() {
                            terms.push(mt(out.dist, i, value.slots[s]));
                        }
                    }
                }
                if ret_reg == Some(u) {
                    if let Some(r) = line.kind_index(crate::machine::InstrKind::Return) {
                        keep_terms.push(mt(*w, r, unit));
                        for (s, terms) in slot_terms.iter_mut().enumerate() {
                            terms.push(mt(*w, r, eval.a1.slots[s]));
                        }
                    }
                }
            }
            if keep_terms.is_empty() {
                continue;
            }
            let written = self.mix(keep_terms)?;
            let keep = self.tape.complement(written);
            let old = state.regs[u].clone();
            let mut slots = vec![];
            for (s, mut terms) in slot_terms.into_iter().enumerate() {
                terms.push(mt(keep, 0, old.slots[s]));
                slots.push(self.mix(terms)?);
            }
            state.regs[u] = LReg { slots };
            state.writes[u] += 1;
        }
        self.write_cons(state, combined.iter().map(|(l, w, e, _, _)| (*l, *w, e)))?;
        for (_, w, eval, _, _) in combined {
            execs.push(Executed {
                weights: w,
                a1: eval.a1,
            });
        }
        Ok(execs)
    }

    fn write_cons<'a>(
        &mut self,
        state: &mut LiftedState,
        lines: impl Iterator<Item = (&'a LineParams, NodeId, &'a LineEval)>,
    ) -> Result<()> {
        let unit = self.unit();
        let (mut c, mut d, mut n) = (vec![], vec![], vec![]);
        for (line, w, eval) in lines {
            if let Some(k) = line.kind_index(InstrKind::Cons) {
                c.push(mt(w, k, unit));
                d.push(mt(w, k, self.slot_of(&eval.a1, ValueType::Int)));
                n.push(mt(w, k, self.slot_of(&eval.a2, ValueType::Ptr)));
            }
        }
        if !c.is_empty() {
            let c = self.mix(c)?;
            let d = self.mix(d)?;
            let n = self.mix(n)?;
            let addr = state.cursor + 1 + state.t;
            state.heap.write(self, addr, c, d, n)?;
        }
        Ok(())
    }

    /// Execute a line of an immutable machine: the result always lands in
    /// `target`. A `heap_gate` scales the line's allocation (loop bodies).
    pub fn exec_immutable(
        &mut self,
        state: &mut LiftedState,
        line: &LineParams,
        target: usize,
        heap_gate: Option<NodeId>,
    ) -> Result<()> {
        let cells = state.heap.cells(self)?;
        let alloc = state.heap.alloc_ptr(self, state.cursor + 1 + state.t)?;
        let eval = self.eval_line(line, &state.regs, &cells, alloc)?;
        let value = self.combine(line.instr, line, &eval, true)?;
        let w = match heap_gate {
            Some(g) => self.activate(Activation::Scalar(g), line.instr)?,
            None => line.instr,
        };
        self.write_cons(state, std::iter::once((line, w, &eval)))?;
        state.regs[target] = value;
        state.writes[target] += 1;
        Ok(())
    }

    /// One step of an assembly machine: every line executes weighted by the
    /// instruction pointer, which is then routed to successors, branch
    /// targets, or the halt bucket.
    pub fn assembly_step(
        &mut self,
        state: &mut LiftedState,
        lines: &[LineParams],
        ret_reg: usize,
    ) -> Result<()> {
        let ip = state.ip.ok_or_else(|| Error::InvalidModel("missing ip".into()))?;
        let p_count = lines.len();
        let acts: Vec<(&LineParams, Activation)> = lines
            .iter()
            .enumerate()
            .map(|(p, l)| (l, Activation::Entry(ip, p)))
            .collect();
        let execs = self.exec_mutable(state, &acts, Some(ret_reg))?;
        let size = p_count + 1;
        let halt = self.point(size, p_count);
        let zero1 = self.zeros(1);
        let mut terms = vec![mt(ip, p_count, halt)];
        for (p, (line, ex)) in lines.iter().zip(&execs).enumerate() {
            let here = self.tape.select(ip, &[p])?;
            let mut leave = vec![];
            let jz = line.kind_index(InstrKind::Jz);
            let jnz = line.kind_index(InstrKind::Jnz);
            if jz.is_some() || jnz.is_some() {
                let z = self.falsy(self.slot_of(&ex.a1, ValueType::Int))?;
                let nz = self.tape.complement(z);
                let mut jt = vec![];
                if let Some(k) = jz {
                    jt.push(mt(ex.weights, k, z));
                }
                if let Some(k) = jnz {
                    jt.push(mt(ex.weights, k, nz));
                }
                let jump = self.mix(jt)?;
                let branch = line
                    .branch
                    .ok_or_else(|| Error::InvalidModel("jump without branch slot".into()))?;
                let target = self.tape.concat(&[branch, zero1])?;
                terms.push(mt(jump, 0, target));
                leave.push(self.tape.scale(jump, -1.0));
            }
            if let Some(k) = line.kind_index(InstrKind::Return) {
                let ret = self.tape.select(ex.weights, &[k])?;
                terms.push(mt(ret, 0, halt));
                leave.push(self.tape.scale(ret, -1.0));
            }
            let cont = if leave.is_empty() {
                here
            } else {
                leave.insert(0, here);
                self.tape.add(&leave)?
            };
            let succ = self.point(size, p + 1);
            terms.push(mt(cont, 0, succ));
        }
        state.ip = Some(self.mix(terms)?);
        state.t += 1;
        Ok(())
    }
}

impl LiftedHeap {
    pub fn fixed(lifter: &mut Lifter<'_>, cells: &[HeapCell]) -> Self {
        LiftedHeap::Fixed(cells.iter().map(|c| lifter.cell_from_dists(c)).collect())
    }

    /// Stack heap with the stack pointer starting at `sp0`.
    pub fn stack(lifter: &mut Lifter<'_>, cells: &[HeapCell], sp0: usize) -> Self {
        let base = cells.iter().map(|c| lifter.cell_from_dists(c)).collect();
        let size = cells.len() + 2;
        let sp = lifter.point(size, sp0);
        LiftedHeap::Stack(StackHeap {
            base,
            sp0,
            sp,
            max_sp: sp0,
            joint: BTreeMap::new(),
            marginal: None,
        })
    }

    /// Current (marginal) cell contents for addresses `1..=h`.
    pub fn cells(&mut self, lifter: &mut Lifter<'_>) -> Result<Vec<LCell>> {
        match self {
            LiftedHeap::Fixed(cells) => Ok(cells.clone()),
            LiftedHeap::Stack(s) => s.marginal(lifter),
        }
    }

    /// Distribution of the address the next `cons` allocates, over the
    /// pointer domain.
    pub fn alloc_ptr(&mut self, lifter: &mut Lifter<'_>, fixed_addr: usize) -> Result<NodeId> {
        let ptr_size = lifter.size(ValueType::Ptr);
        match self {
            LiftedHeap::Fixed(_) => {
                if fixed_addr >= ptr_size {
                    return Err(Error::InvalidModel(format!(
                        "allocation address {fixed_addr} outside the pointer domain"
                    )));
                }
                Ok(lifter.point(ptr_size, fixed_addr))
            }
            LiftedHeap::Stack(s) => {
                let len = s.base.len() + 2;
                if ptr_size <= len {
                    let idx: Vec<usize> = (0..ptr_size).collect();
                    Ok(lifter.tape.select(s.sp, &idx)?)
                } else {
                    let pad = lifter.zeros(ptr_size - len);
                    Ok(lifter.tape.concat(&[s.sp, pad])?)
                }
            }
        }
    }

    /// Allocate a cell with probability `c`; `data` and `next` carry mass `c`.
    pub fn write(
        &mut self,
        lifter: &mut Lifter<'_>,
        fixed_addr: usize,
        c: NodeId,
        data: NodeId,
        next: NodeId,
    ) -> Result<()> {
        match self {
            LiftedHeap::Fixed(cells) => {
                let old = *cells.get(fixed_addr.wrapping_sub(1)).ok_or_else(|| {
                    Error::InvalidModel(format!("allocation address {fixed_addr} outside the heap"))
                })?;
                let unit = lifter.unit();
                let keep = lifter.tape.complement(c);
                let d = lifter.mix(vec![mt(unit, 0, data), mt(keep, 0, old.data)])?;
                let n = lifter.mix(vec![mt(unit, 0, next), mt(keep, 0, old.next)])?;
                cells[fixed_addr - 1] = LCell { data: d, next: n };
                Ok(())
            }
            LiftedHeap::Stack(s) => s.write(lifter, c, data, next),
        }
    }

    pub fn snapshot_cells(&mut self, lifter: &mut Lifter<'_>) -> Result<Vec<LCell>> {
        self.cells(lifter)
    }
}

impl StackHeap {
    fn marginal(&mut self, lifter: &mut Lifter<'_>) -> Result<Vec<LCell>> {
        if let Some(m) = &self.marginal {
            return Ok(m.clone());
        }
        let unit = lifter.unit();
        let mut cells = self.base.clone();
        for k in self.sp0..self.max_sp {
            let (dz, nz) = (
                lifter.point(lifter.size(ValueType::Int), 0),
                lifter.point(lifter.size(ValueType::Ptr), 0),
            );
            let mut dt = vec![];
            let mut nt = vec![];
            for s in self.sp0..=k {
                dt.push(mt(self.sp, s, dz));
                nt.push(mt(self.sp, s, nz));
            }
            for s in k + 1..=self.max_sp {
                if let Some(c) = self.joint.get(&(s, k)) {
                    dt.push(mt(unit, 0, c.data));
                    nt.push(mt(unit, 0, c.next));
                }
            }
            cells[k - 1] = LCell {
                data: lifter.mix(dt)?,
                next: lifter.mix(nt)?,
            };
        }
        self.marginal = Some(cells.clone());
        Ok(cells)
    }

    fn write(&mut self, lifter: &mut Lifter<'_>, c: NodeId, data: NodeId, next: NodeId) -> Result<()> {
        let limit = self.base.len() + 1;
        let keep = lifter.tape.complement(c);
        let new_max = (self.max_sp + 1).min(limit);
        let mut joint = BTreeMap::new();
        for s in self.sp0..=new_max {
            for k in self.sp0..s {
                let mut dt = vec![];
                let mut nt = vec![];
                if let Some(cell) = self.joint.get(&(s, k)) {
                    dt.push(mt(keep, 0, cell.data));
                    nt.push(mt(keep, 0, cell.next));
                }
                if k + 1 == s {
                    dt.push(mt(self.sp, s - 1, data));
                    nt.push(mt(self.sp, s - 1, next));
                } else if let Some(cell) = self.joint.get(&(s - 1, k)) {
                    dt.push(mt(c, 0, cell.data));
                    nt.push(mt(c, 0, cell.next));
                }
                if dt.is_empty() {
                    continue;
                }
                joint.insert(
                    (s, k),
                    LCell {
                        data: lifter.mix(dt)?,
                        next: lifter.mix(nt)?,
                    },
                );
            }
        }
        let shifted = lifter.tape.rotate(self.sp, 1);
        self.sp = lifter.mix(vec![mt(keep, 0, self.sp), mt(c, 0, shifted)])?;
        self.joint = joint;
        self.max_sp = new_max;
        self.marginal = None;
        Ok(())
    }
}

impl LiftedState {
    /// Read the state's current values off the tape.
    pub fn snapshot(&self, lifter: &mut Lifter<'_>) -> Result<MachineState> {
        let mut heap = self.heap.clone();
        let cells = heap.cells(lifter)?;
        let tape = &*lifter.tape;
        let dist = |n: NodeId| Dist::from_vec_unchecked(tape.value(n).to_vec());
        let sp = match &heap {
            LiftedHeap::Stack(s) => Some(dist(s.sp)),
            LiftedHeap::Fixed(_) => None,
        };
        Ok(MachineState {
            domains: lifter.dom,
            ip: self.ip.map(dist),
            registers: self
                .regs
                .iter()
                .map(|r| Register {
                    slots: r.slots.iter().map(|&n| dist(n)).collect(),
                })
                .collect(),
            heap: cells
                .iter()
                .map(|c| HeapCell {
                    data: dist(c.data),
                    next: dist(c.next),
                })
                .collect(),
            sp,
            t: self.t,
        })
    }
}
