//! Depth-first enumerative search over the same program space the
//! gradient-based models learn in.
//!
//! Programs are enumerated by iterative deepening on the number of
//! non-`noop` lines. Arguments an instruction ignores are pinned to their
//! first choice, commutative operands are ordered, and immutable machines
//! only read registers that hold a live value. Typed immutable machines
//! additionally track the static type of every register and skip
//! ill-typed reads; dead lines are rejected before a program is run.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::interp::execute;
use super::program::ConcreteProgram;
use crate::error::{Error, Result};
use crate::machine::InstrKind;
use crate::models::{Block, Choice, ClosureVar, Combinator, Layout, LineSlots, RegRole};
use crate::value::{Example, Input, InputKind, OutputKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Maximum number of search nodes (partial or complete assignments).
    pub max_nodes: u64,
    pub max_time: Option<Duration>,
}

impl Budget {
    pub fn nodes(max_nodes: u64) -> Self {
        Budget {
            max_nodes,
            max_time: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub program: Option<ConcreteProgram>,
    pub nodes: u64,
    pub elapsed: Duration,
    /// The whole space was searched without finding a program.
    pub exhausted: bool,
    /// Number of active lines of the program found.
    pub active_lines: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ty {
    Int,
    Ptr,
    Bool,
    Any,
}

fn fits(have: Ty, want: Ty) -> bool {
    have == Ty::Any || want == Ty::Any || have == want
}

/// Operands an instruction reads: `(arg1, arg2, cond, branch)`.
fn uses(kind: InstrKind) -> (bool, bool, bool, bool) {
    use InstrKind::*;
    match kind {
        Cons | Add | Eq | Gt | And | Or => (true, true, false, false),
        Head | Tail | Inc | Dec | Return => (true, false, false, false),
        Jz | Jnz => (true, false, false, true),
        Ite => (true, true, true, false),
        Zero | One | Noop => (false, false, false, false),
    }
}

/// Operand and result types of an instruction (`Ite` is handled apart).
fn signature(kind: InstrKind) -> (Ty, Ty, Ty) {
    use InstrKind::*;
    use Ty::*;
    match kind {
        Cons => (Int, Ptr, Ptr),
        Head => (Ptr, Any, Int),
        Tail => (Ptr, Any, Ptr),
        Add => (Int, Int, Int),
        Inc | Dec => (Int, Any, Int),
        Eq | Gt => (Int, Int, Bool),
        And | Or => (Bool, Bool, Bool),
        Zero | One => (Any, Any, Int),
        Noop | Jz | Jnz | Return | Ite => (Any, Any, Any),
    }
}

/// Operand pairs that give nothing new: swapped commutative operands and
/// comparisons of a register with itself.
fn redundant(kind: InstrKind, a1: usize, a2: usize) -> bool {
    use InstrKind::*;
    match kind {
        Add => a2 < a1,
        Eq | And | Or => a2 <= a1,
        Gt | Ite => a1 == a2,
        _ => false,
    }
}

#[derive(Clone, Copy, Debug)]
enum Step {
    Line(usize),
    LoopHead,
    BodyResult,
    Return,
}

type Assign = Vec<(usize, usize)>;

struct Search<'a> {
    layout: &'a Layout,
    examples: &'a [Example],
    out_kind: OutputKind,
    typed: bool,
    immutable: bool,
    steps: Vec<Step>,
    choices: Vec<usize>,
    /// Static type of every readable register; `None` when unreadable.
    ty: Vec<Option<Ty>>,
    /// Line index producing each register (immutable machines).
    producer: Vec<Option<usize>>,
    loop_on: bool,
    active_left: usize,
    nodes: u64,
    budget: Budget,
    start: Instant,
    stopped: bool,
    found: Option<ConcreteProgram>,
}

impl<'a> Search<'a> {
    fn new(layout: &'a Layout, examples: &'a [Example], out_kind: OutputKind, budget: Budget) -> Self {
        let spec = &layout.spec;
        let typed = spec.variant.is_typed();
        let immutable = spec.variant.is_immutable();
        let ty = layout
            .regs
            .iter()
            .map(|role| match role {
                RegRole::Initial(i) if typed => Some(match spec.inputs.get(*i) {
                    Some(InputKind::List) => Ty::Ptr,
                    Some(InputKind::Scalar) => Ty::Int,
                    None => Ty::Any,
                }),
                RegRole::Initial(_) => Some(Ty::Any),
                _ if immutable => None,
                _ => Some(Ty::Any),
            })
            .collect();
        let mut producer = vec![None; layout.regs.len()];
        for (i, ls) in layout.lines.iter().enumerate() {
            if let Some(t) = ls.target {
                producer[t] = Some(i);
            }
        }
        let mut steps = vec![];
        let line_steps = |block: Block| {
            layout
                .lines
                .iter()
                .enumerate()
                .filter(move |(_, l)| l.line.block == block)
                .map(|(i, _)| Step::Line(i))
        };
        steps.extend(line_steps(Block::Program));
        steps.extend(line_steps(Block::Prefix));
        if layout.loop_slots.is_some() {
            steps.push(Step::LoopHead);
            steps.extend(line_steps(Block::Body));
            steps.push(Step::BodyResult);
        }
        steps.extend(line_steps(Block::Suffix));
        if layout.ret.is_some() {
            steps.push(Step::Return);
        }
        Search {
            layout,
            examples,
            out_kind,
            typed,
            immutable,
            steps,
            choices: vec![0; layout.num_slots()],
            ty,
            producer,
            loop_on: true,
            active_left: 0,
            nodes: 0,
            budget,
            start: Instant::now(),
            stopped: false,
            found: None,
        }
    }

    fn want(&self, t: Ty) -> Ty {
        if self.typed {
            t
        } else {
            Ty::Any
        }
    }

    /// Choice indices of a register slot that are readable with type `want`.
    fn readable(&self, slot: usize, want: Ty) -> Vec<(usize, Ty)> {
        self.layout.slots[slot]
            .choices
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c {
                Choice::Reg(r) => self.ty[*r].filter(|&t| fits(t, want)).map(|t| (i, t)),
                _ => None,
            })
            .collect()
    }

    fn reg_at(&self, slot: usize, choice: usize) -> usize {
        match self.layout.slots[slot].choices[choice] {
            Choice::Reg(r) => r,
            other => unreachable!("register slot holds {other:?}"),
        }
    }

    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes >= self.budget.max_nodes {
            self.stopped = true;
        }
        if self.nodes % 1024 == 0 {
            if let Some(limit) = self.budget.max_time {
                if self.start.elapsed() >= limit {
                    self.stopped = true;
                }
            }
        }
        !self.stopped
    }

    fn lines_left(&self, from: usize) -> usize {
        self.steps[from..]
            .iter()
            .filter(|s| match s {
                Step::Line(l) => self.loop_on || self.layout.lines[*l].line.block != Block::Body,
                _ => false,
            })
            .count()
    }

    fn dfs(&mut self, at: usize) {
        if self.stopped || self.found.is_some() {
            return;
        }
        if self.active_left > self.lines_left(at) {
            return;
        }
        let Some(&step) = self.steps.get(at) else {
            self.leaf();
            return;
        };
        match step {
            Step::Line(l) => self.line_step(at, l),
            Step::LoopHead => self.loop_head(at),
            Step::BodyResult => self.body_result(at),
            Step::Return => {
                let ret = self.layout.ret.expect("return slot");
                let want = self.want(match self.out_kind {
                    OutputKind::List => Ty::Ptr,
                    OutputKind::Scalar => Ty::Int,
                    OutputKind::Bool => Ty::Bool,
                });
                for (c, _) in self.readable(ret, want) {
                    self.choices[ret] = c;
                    if !self.tick() {
                        return;
                    }
                    self.dfs(at + 1);
                    if self.stopped || self.found.is_some() {
                        return;
                    }
                }
                self.choices[ret] = 0;
            }
        }
    }

    fn apply(&mut self, at: usize, assign: &Assign, regs: &[(usize, Option<Ty>)]) {
        let saved_ty: Vec<_> = regs.iter().map(|&(r, _)| (r, self.ty[r])).collect();
        for &(s, c) in assign {
            self.choices[s] = c;
        }
        for &(r, t) in regs {
            self.ty[r] = t;
        }
        if self.tick() {
            self.dfs(at + 1);
        }
        for &(s, _) in assign {
            self.choices[s] = 0;
        }
        for (r, t) in saved_ty {
            self.ty[r] = t;
        }
    }

    fn line_step(&mut self, at: usize, l: usize) {
        let ls = self.layout.lines[l].clone();
        let kinds: Vec<InstrKind> = self.layout.slots[ls.instr]
            .choices
            .iter()
            .map(|c| match c {
                Choice::Instr(k) => *k,
                other => unreachable!("instruction slot holds {other:?}"),
            })
            .collect();
        let noop = kinds.iter().position(|&k| k == InstrKind::Noop).expect("noop available");
        let inactive_ok = self.active_left < self.lines_left(at);
        let body_off = ls.line.block == Block::Body && !self.loop_on;
        if inactive_ok || body_off {
            let regs: Vec<_> = ls.target.map(|t| (t, None)).into_iter().collect();
            self.apply(at, &vec![(ls.instr, noop)], &regs);
        }
        if body_off || self.active_left == 0 {
            return;
        }
        self.active_left -= 1;
        for (ki, &kind) in kinds.iter().enumerate() {
            if kind == InstrKind::Noop {
                continue;
            }
            for (assign, result) in self.line_candidates(&ls, ki, kind) {
                let regs: Vec<_> = ls.target.map(|t| (t, Some(result))).into_iter().collect();
                self.apply(at, &assign, &regs);
                if self.stopped || self.found.is_some() {
                    self.active_left += 1;
                    return;
                }
            }
        }
        self.active_left += 1;
    }

    /// Every canonical operand assignment of one active line.
    fn line_candidates(&self, ls: &LineSlots, ki: usize, kind: InstrKind) -> Vec<(Assign, Ty)> {
        let (u1, u2, uc, ub) = uses(kind);
        let (w1, w2, res) = signature(kind);
        let single = |used: bool, slot: usize, want: Ty| -> Vec<(usize, Ty)> {
            if used {
                self.readable(slot, self.want(want))
            } else {
                vec![(0, Ty::Any)]
            }
        };
        let a1s = single(u1, ls.arg1, w1);
        let conds = match ls.cond {
            Some(c) if uc => self.readable(c, self.want(Ty::Bool)),
            _ => vec![(0, Ty::Any)],
        };
        let writes = !matches!(
            kind,
            InstrKind::Noop | InstrKind::Jz | InstrKind::Jnz | InstrKind::Return
        );
        let outs: Vec<usize> = match ls.out {
            Some(o) if writes => (0..self.layout.slots[o].size()).collect(),
            _ => vec![0],
        };
        let branches: Vec<usize> = match ls.branch {
            Some(b) if ub => (0..self.layout.slots[b].size()).collect(),
            _ => vec![0],
        };
        let mut out = vec![];
        for &(a1, t1) in &a1s {
            let want2 = if kind == InstrKind::Ite { t1 } else { w2 };
            for (a2, t2) in single(u2, ls.arg2, want2) {
                if u2 && redundant(kind, a1, a2) {
                    continue;
                }
                let result = if kind == InstrKind::Ite {
                    if t1 == Ty::Any {
                        t2
                    } else {
                        t1
                    }
                } else {
                    res
                };
                for &(c, _) in &conds {
                    for &o in &outs {
                        for &b in &branches {
                            let mut assign = vec![(ls.instr, ki), (ls.arg1, a1), (ls.arg2, a2)];
                            assign.extend(ls.cond.map(|s| (s, c)));
                            assign.extend(ls.out.map(|s| (s, o)));
                            assign.extend(ls.branch.map(|s| (s, b)));
                            out.push((assign, if self.typed { result } else { Ty::Any }));
                        }
                    }
                }
            }
        }
        out
    }

    fn combinator_of(&self, slot: Option<usize>, choice: usize) -> Option<Combinator> {
        slot.map(|s| match self.layout.slots[s].choices[choice] {
            Choice::Combinator(c) => c,
            other => unreachable!("combinator slot holds {other:?}"),
        })
    }

    fn loop_head(&mut self, at: usize) {
        let layout = self.layout;
        let ls = layout.loop_slots.clone().expect("loop slots");
        let closure: Vec<(ClosureVar, usize)> = ClosureVar::ALL
            .iter()
            .filter_map(|&v| layout.closure_reg(v).map(|r| (v, r)))
            .collect();
        if self.immutable {
            self.loop_on = false;
            let regs: Vec<_> = closure.iter().map(|&(_, r)| (r, None)).collect();
            self.apply(at, &vec![], &regs);
            self.loop_on = true;
            if self.stopped || self.found.is_some() {
                return;
            }
        }
        let ncomb = ls.combinator.map_or(1, |s| layout.slots[s].size());
        for ci in 0..ncomb {
            let comb = self.combinator_of(ls.combinator, ci);
            let zip = comb == Some(Combinator::ZipWithi);
            let fold = comb == Some(Combinator::Foldli);
            let ptr = self.want(Ty::Ptr);
            let l1s = self.readable(ls.list1, ptr);
            let l2s = match ls.list2 {
                Some(s) if zip => self.readable(s, ptr),
                _ => vec![(0, Ty::Any)],
            };
            let accs = match ls.acc_init {
                Some(s) if fold => self.readable(s, Ty::Any),
                _ => vec![(0, Ty::Any)],
            };
            for &(l1, _) in &l1s {
                for &(l2, _) in &l2s {
                    for &(a, acc_ty) in &accs {
                        let mut assign = vec![(ls.list1, l1)];
                        assign.extend(ls.combinator.map(|s| (s, ci)));
                        assign.extend(ls.list2.map(|s| (s, l2)));
                        assign.extend(ls.acc_init.map(|s| (s, a)));
                        let regs: Vec<_> = closure
                            .iter()
                            .map(|&(v, r)| {
                                let t = if !self.immutable {
                                    Some(Ty::Any)
                                } else {
                                    match v {
                                        ClosureVar::Ele | ClosureVar::Idx => Some(self.want(Ty::Int)),
                                        ClosureVar::Ele2 => zip.then(|| self.want(Ty::Int)),
                                        ClosureVar::Acc => fold.then_some(acc_ty),
                                    }
                                };
                                (r, t)
                            })
                            .collect();
                        self.apply(at, &assign, &regs);
                        if self.stopped || self.found.is_some() {
                            return;
                        }
                    }
                }
            }
        }
    }

    fn body_result(&mut self, at: usize) {
        let layout = self.layout;
        let ls = layout.loop_slots.clone().expect("loop slots");
        let result_reg = layout.loop_result_reg();
        if !self.loop_on {
            let regs: Vec<_> = result_reg.map(|r| (r, None)).into_iter().collect();
            self.apply(at, &vec![], &regs);
            return;
        }
        let comb = self.combinator_of(ls.combinator, ls.combinator.map_or(0, |s| self.choices[s]));
        let Some(br) = ls.body_result else {
            self.apply(at, &vec![], &[]);
            return;
        };
        let acc_ty = match (comb, layout.closure_reg(ClosureVar::Acc)) {
            (Some(Combinator::Foldli), Some(r)) => self.ty[r].unwrap_or(Ty::Any),
            _ => Ty::Any,
        };
        let want = match comb {
            Some(Combinator::Foldli) => acc_ty,
            _ => self.want(Ty::Int),
        };
        let outs: Vec<usize> = match ls.loop_out {
            Some(o) => (0..layout.slots[o].size()).collect(),
            None => vec![0],
        };
        for (c, t) in self.readable(br, want) {
            let res_ty = match comb {
                Some(Combinator::Foldli) if acc_ty == Ty::Any => t,
                Some(Combinator::Foldli) => acc_ty,
                _ => self.want(Ty::Ptr),
            };
            for &o in &outs {
                let mut assign = vec![(br, c)];
                assign.extend(ls.loop_out.map(|s| (s, o)));
                let regs: Vec<_> = result_reg.map(|r| (r, Some(res_ty))).into_iter().collect();
                self.apply(at, &assign, &regs);
                if self.stopped || self.found.is_some() {
                    return;
                }
            }
        }
    }

    /// Immutable machines: every active line and an enabled loop must
    /// contribute to the returned register.
    fn live(&self) -> bool {
        let layout = self.layout;
        let Some(ret) = layout.ret else {
            return true;
        };
        let mut used = vec![false; layout.regs.len()];
        let mut stack = vec![self.reg_at(ret, self.choices[ret])];
        let kind_of = |ls: &LineSlots| match layout.slots[ls.instr].choices[self.choices[ls.instr]] {
            Choice::Instr(k) => k,
            other => unreachable!("instruction slot holds {other:?}"),
        };
        while let Some(r) = stack.pop() {
            if std::mem::replace(&mut used[r], true) {
                continue;
            }
            if let Some(l) = self.producer[r] {
                let ls = &layout.lines[l];
                let (u1, u2, uc, _) = uses(kind_of(ls));
                if u1 {
                    stack.push(self.reg_at(ls.arg1, self.choices[ls.arg1]));
                }
                if u2 {
                    stack.push(self.reg_at(ls.arg2, self.choices[ls.arg2]));
                }
                if let (true, Some(c)) = (uc, ls.cond) {
                    stack.push(self.reg_at(c, self.choices[c]));
                }
            } else if Some(r) == layout.loop_result_reg() && self.loop_on {
                let lp = layout.loop_slots.as_ref().expect("loop slots");
                let comb = self.combinator_of(lp.combinator, lp.combinator.map_or(0, |s| self.choices[s]));
                let mut reads = vec![lp.list1];
                if let Some(b) = lp.body_result {
                    reads.push(b);
                }
                if comb == Some(Combinator::ZipWithi) {
                    reads.extend(lp.list2);
                }
                if comb == Some(Combinator::Foldli) {
                    reads.extend(lp.acc_init);
                }
                for s in reads {
                    stack.push(self.reg_at(s, self.choices[s]));
                }
            }
        }
        if self.loop_on {
            if let Some(r) = layout.loop_result_reg() {
                if !used[r] {
                    return false;
                }
            }
        }
        layout.lines.iter().all(|ls| {
            kind_of(ls) == InstrKind::Noop || ls.target.is_none_or(|t| used[t])
        })
    }

    fn leaf(&mut self) {
        if self.immutable && !self.live() {
            return;
        }
        let program = ConcreteProgram {
            choices: self.choices.clone(),
        };
        let Ok(decoded) = program.decode(self.layout) else {
            return;
        };
        let ok = self.examples.iter().all(|ex| {
            execute(self.layout, &decoded, &ex.inputs)
                .ok()
                .and_then(|run| run.decode(self.out_kind))
                .is_some_and(|o| o == ex.output)
        });
        if ok {
            self.found = Some(program);
        }
    }
}

/// Search for a program consistent with all `examples`.
pub fn enumerate(
    layout: &Layout,
    examples: &[Example],
    out_kind: OutputKind,
    budget: Budget,
) -> Result<SearchOutcome> {
    if budget.max_nodes == 0 {
        return Err(Error::Config("the node budget must be positive".into()));
    }
    for ex in examples {
        let kinds: Vec<InputKind> = ex.inputs.iter().map(Input::kind).collect();
        if kinds != layout.spec.inputs {
            return Err(Error::InvalidInput(format!(
                "example inputs {kinds:?} do not match the model signature {:?}",
                layout.spec.inputs
            )));
        }
    }
    let mut search = Search::new(layout, examples, out_kind, budget);
    let total_lines = layout.lines.len();
    let mut active_lines = None;
    for k in 0..=total_lines {
        search.active_left = k;
        search.dfs(0);
        if search.found.is_some() {
            active_lines = Some(k);
            break;
        }
        if search.stopped {
            break;
        }
    }
    Ok(SearchOutcome {
        exhausted: search.found.is_none() && !search.stopped,
        program: search.found,
        nodes: search.nodes,
        elapsed: search.start.elapsed(),
        active_lines,
    })
}
