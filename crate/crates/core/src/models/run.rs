//! Building the unrolled lifted execution of a model on the tape.

use super::layout::{Block, ClosureVar, Layout, LineSlots};
use super::params::ParamSet;
use super::spec::Combinator;
use crate::autodiff::{MixTerm, NodeId, Tape};
use crate::error::{Error, Result};
use crate::machine::{
    encode_inputs, Activation, InstrKind, LCell, LReg, LiftedHeap, LiftedState, Lifter, LineParams,
    MachineState, RegChoice, ValueType,
};
use crate::value::Input;

/// Parameter leaves and their softmax distributions on a tape.
#[derive(Clone, Debug)]
pub struct ProgramNodes {
    pub logits: Vec<NodeId>,
    pub dists: Vec<NodeId>,
}

impl ProgramNodes {
    pub fn attach(tape: &mut Tape, params: &ParamSet) -> Result<Self> {
        let mut logits = vec![];
        let mut dists = vec![];
        for l in &params.logits {
            let leaf = tape.param(l);
            dists.push(tape.softmax(leaf)?);
            logits.push(leaf);
        }
        Ok(ProgramNodes { logits, dists })
    }

    /// Overwrite the logit leaves; call [`Tape::forward`] afterwards.
    pub fn load(&self, tape: &mut Tape, params: &ParamSet) -> Result<()> {
        for (&leaf, l) in self.logits.iter().zip(&params.logits) {
            tape.set_value(leaf, l)?;
        }
        Ok(())
    }

    /// Read the logits currently stored on the tape.
    pub fn read(&self, tape: &Tape) -> ParamSet {
        ParamSet {
            logits: self.logits.iter().map(|&l| tape.value(l).to_vec()).collect(),
        }
    }
}

/// Final lifted state of a run and the register holding the output.
#[derive(Clone, Debug)]
pub struct Run {
    pub state: LiftedState,
    pub output: LReg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LoopKind {
    Foreach,
    Combinator(Combinator),
}

struct Ctx<'a> {
    layout: &'a Layout,
    nodes: &'a ProgramNodes,
}

impl Ctx<'_> {
    fn choice(&self, slot: usize) -> RegChoice {
        RegChoice {
            dist: self.nodes.dists[slot],
            regs: self.layout.slots[slot].regs(),
        }
    }

    fn line(&self, ls: &LineSlots) -> LineParams {
        let kinds = self.layout.slots[ls.instr]
            .choices
            .iter()
            .filter_map(|c| match c {
                super::layout::Choice::Instr(k) => Some(*k),
                _ => None,
            })
            .collect();
        LineParams {
            kinds,
            instr: self.nodes.dists[ls.instr],
            out: ls.out.map(|s| self.choice(s)),
            arg1: self.choice(ls.arg1),
            arg2: self.choice(ls.arg2),
            cond: ls.cond.map(|s| self.choice(s)),
            branch: ls.branch.map(|s| self.nodes.dists[s]),
        }
    }

    fn lines(&self, block: Block) -> Vec<(LineParams, Option<usize>)> {
        self.layout
            .lines_in(block)
            .map(|ls| (self.line(ls), ls.target))
            .collect()
    }
}

/// Initial lifted state holding the encoded inputs.
pub fn initial_state(lifter: &mut Lifter<'_>, layout: &Layout, inputs: &[Input]) -> Result<LiftedState> {
    let spec = &layout.spec;
    let kinds: Vec<_> = inputs.iter().map(Input::kind).collect();
    if kinds != spec.inputs {
        return Err(Error::InvalidInput(format!(
            "inputs {kinds:?} do not match the model signature {:?}",
            spec.inputs
        )));
    }
    let (enc, cursor) = encode_inputs(inputs, &layout.domains, layout.initial_regs(), spec.max_list_len)?;
    let mut regs: Vec<LReg> = enc.registers.iter().map(|r| lifter.reg_from_dists(r)).collect();
    while regs.len() < layout.regs.len() {
        regs.push(lifter.zero_reg());
    }
    let heap = if spec.variant.has_stack_pointer() {
        LiftedHeap::stack(lifter, &enc.heap, cursor + 1)
    } else {
        LiftedHeap::fixed(lifter, &enc.heap)
    };
    let ip = spec
        .variant
        .is_assembly()
        .then(|| lifter.point(spec.program_len + 1, 0));
    Ok(LiftedState {
        writes: vec![0; regs.len()],
        regs,
        heap,
        ip,
        cursor,
        t: 0,
    })
}

/// Unroll the whole model on one input and return the final state.
pub fn build_run(
    lifter: &mut Lifter<'_>,
    layout: &Layout,
    nodes: &ProgramNodes,
    inputs: &[Input],
) -> Result<Run> {
    let ctx = Ctx { layout, nodes };
    let spec = &layout.spec;
    let mut state = initial_state(lifter, layout, inputs)?;
    if spec.variant.is_assembly() {
        let lines: Vec<LineParams> = ctx.lines(Block::Program).into_iter().map(|(l, _)| l).collect();
        let out = spec.registers - 1;
        for _ in 0..spec.timesteps {
            lifter.assembly_step(&mut state, &lines, out)?;
        }
        let output = state.regs[out].clone();
        return Ok(Run { state, output });
    }
    for (line, target) in ctx.lines(Block::Prefix) {
        exec_line(lifter, &mut state, &line, target, None)?;
    }
    if spec.body > 0 {
        run_loop_section(lifter, &ctx, &mut state)?;
    }
    for (line, target) in ctx.lines(Block::Suffix) {
        exec_line(lifter, &mut state, &line, target, None)?;
    }
    let output = match (layout.output_reg(), layout.ret) {
        (Some(r), _) => state.regs[r].clone(),
        (None, Some(ret)) => lifter.read(&ctx.choice(ret), &state.regs)?,
        (None, None) => return Err(Error::InvalidModel("no output register".into())),
    };
    Ok(Run { state, output })
}

fn exec_line(
    lifter: &mut Lifter<'_>,
    state: &mut LiftedState,
    line: &LineParams,
    target: Option<usize>,
    gate: Option<NodeId>,
) -> Result<()> {
    match target {
        Some(t) => lifter.exec_immutable(state, line, t, gate)?,
        None => {
            let act = gate.map_or(Activation::Always, Activation::Scalar);
            lifter.exec_mutable(state, &[(line, act)], None)?;
        }
    }
    state.t += 1;
    Ok(())
}

fn run_loop_section(lifter: &mut Lifter<'_>, ctx: &Ctx<'_>, state: &mut LiftedState) -> Result<()> {
    let layout = ctx.layout;
    let spec = &layout.spec;
    let ls = layout
        .loop_slots
        .as_ref()
        .ok_or_else(|| Error::InvalidModel("loop body without loop slots".into()))?;
    let body = ctx.lines(Block::Body);
    let kinds: Vec<LoopKind> = if spec.variant.has_combinators() {
        spec.combinators.iter().map(|&c| LoopKind::Combinator(c)).collect()
    } else {
        vec![LoopKind::Foreach]
    };
    let result = if kinds.len() == 1 {
        run_loop(lifter, ctx, state, &body, kinds[0])?
    } else {
        let cdist = ctx.nodes.dists[ls.combinator.expect("combinator slot")];
        let start = state.clone();
        let mut runs = vec![];
        for (i, &k) in kinds.iter().enumerate() {
            let mut st = start.clone();
            let res = run_loop(lifter, ctx, &mut st, &body, k)?;
            runs.push((i, st, res.expect("combinators return a value")));
        }
        *state = mix_states(lifter, cdist, &runs)?;
        let terms: Vec<(NodeId, usize, &LReg)> = runs.iter().map(|(i, _, r)| (cdist, *i, r)).collect();
        Some(lifter.weighted_regs(&terms)?)
    };
    if let Some(res) = result {
        if let Some(r) = layout.loop_result_reg() {
            state.regs[r] = res;
            state.writes[r] += 1;
        } else if let Some(out) = ls.loop_out {
            let choice = ctx.choice(out);
            for (i, &u) in choice.regs.iter().enumerate() {
                let hit = lifter.tape.select(choice.dist, &[i])?;
                let keep = lifter.tape.complement(hit);
                let old = state.regs[u].clone();
                state.regs[u] = lifter.weighted_regs(&[(keep, 0, &old), (choice.dist, i, &res)])?;
                state.writes[u] += 1;
            }
        }
    }
    Ok(())
}

/// Mixture of states produced by alternative loops, weighted by `dist`.
fn mix_states(lifter: &mut Lifter<'_>, dist: NodeId, runs: &[(usize, LiftedState, LReg)]) -> Result<LiftedState> {
    let mut out = runs[0].1.clone();
    for u in 0..out.regs.len() {
        if runs.iter().all(|(_, s, _)| s.regs[u] == runs[0].1.regs[u]) {
            continue;
        }
        let terms: Vec<(NodeId, usize, &LReg)> = runs.iter().map(|(i, s, _)| (dist, *i, &s.regs[u])).collect();
        out.regs[u] = lifter.weighted_regs(&terms)?;
    }
    let cells: Vec<Vec<LCell>> = runs
        .iter()
        .map(|(_, s, _)| match &s.heap {
            LiftedHeap::Fixed(c) => Ok(c.clone()),
            LiftedHeap::Stack(_) => Err(Error::InvalidModel("loops need a fixed heap".into())),
        })
        .collect::<Result<_>>()?;
    let mut mixed = cells[0].clone();
    for k in 0..mixed.len() {
        if cells.iter().all(|c| c[k] == cells[0][k]) {
            continue;
        }
        let data = runs
            .iter()
            .zip(&cells)
            .map(|((i, _, _), c)| MixTerm::new(dist, *i, c[k].data))
            .collect();
        let next = runs
            .iter()
            .zip(&cells)
            .map(|((i, _, _), c)| MixTerm::new(dist, *i, c[k].next))
            .collect();
        mixed[k] = LCell {
            data: lifter.mix(data)?,
            next: lifter.mix(next)?,
        };
    }
    out.heap = LiftedHeap::Fixed(mixed);
    Ok(out)
}

/// Unrolled loop. Iteration `i` is active with the probability that the
/// traversal pointer(s) are non-null; inactive iterations leave registers,
/// heap, accumulator and output list unchanged.
fn run_loop(
    lifter: &mut Lifter<'_>,
    ctx: &Ctx<'_>,
    state: &mut LiftedState,
    body: &[(LineParams, Option<usize>)],
    kind: LoopKind,
) -> Result<Option<LReg>> {
    let layout = ctx.layout;
    let spec = &layout.spec;
    let ls = layout.loop_slots.as_ref().expect("loop slots");
    let (len, nbody) = (spec.max_list_len, spec.body);
    let int_size = lifter.size(ValueType::Int);
    let ptr_size = lifter.size(ValueType::Ptr);
    let zip = kind == LoopKind::Combinator(Combinator::ZipWithi);
    let start_t = state.t;

    let list1 = lifter.read(&ctx.choice(ls.list1), &state.regs)?;
    let mut ptr1 = lifter.slot_of(&list1, ValueType::Ptr);
    let mut ptr2 = if zip {
        let list2 = lifter.read(&ctx.choice(ls.list2.expect("list2 slot")), &state.regs)?;
        Some(lifter.slot_of(&list2, ValueType::Ptr))
    } else {
        None
    };
    let mut acc = match kind {
        LoopKind::Combinator(Combinator::Foldli) => {
            lifter.read(&ctx.choice(ls.acc_init.expect("acc slot")), &state.regs)?
        }
        _ => lifter.zero_reg(),
    };
    let out_base = state.cursor + 1 + spec.total_timesteps();
    let mut result_ptr = None;
    let closure = |v: ClosureVar| layout.closure_reg(v);
    for i in 0..len {
        let cells = state.heap.cells(lifter)?;
        let n1 = lifter.null_prob(ptr1)?;
        let (gate, end) = match ptr2 {
            Some(p2) => {
                let n2 = lifter.null_prob(p2)?;
                let a = lifter.tape.complement(n1);
                let b = lifter.tape.complement(n2);
                let g = lifter.tape.mul(a, b)?;
                (g, lifter.tape.complement(g))
            }
            None => (lifter.tape.complement(n1), n1),
        };
        let ele = lifter.head(ptr1, &cells)?;
        let ele_reg = lifter.value_reg(ValueType::Int, ele);
        if let Some(r) = closure(ClosureVar::Ele) {
            state.regs[r] = ele_reg;
        }
        if let Some(r) = closure(ClosureVar::Ele2) {
            state.regs[r] = match ptr2 {
                Some(p2) => {
                    let e2 = lifter.head(p2, &cells)?;
                    lifter.value_reg(ValueType::Int, e2)
                }
                None => lifter.zero_reg(),
            };
        }
        if let Some(r) = closure(ClosureVar::Acc) {
            state.regs[r] = acc.clone();
        }
        if let Some(r) = closure(ClosureVar::Idx) {
            let idx = lifter.point(int_size, i);
            state.regs[r] = lifter.value_reg(ValueType::Int, idx);
        }
        state.t = start_t + i * nbody;
        for (line, target) in body {
            exec_line(lifter, state, line, *target, Some(gate))?;
        }
        if let LoopKind::Combinator(c) = kind {
            let res = lifter.read(&ctx.choice(ls.body_result.expect("body result slot")), &state.regs)?;
            match c {
                Combinator::Foldli => {
                    acc = lifter.weighted_regs(&[(end, 0, &acc), (gate, 0, &res)])?;
                }
                Combinator::Mapi | Combinator::ZipWithi => {
                    let addr = out_base + i;
                    let zero_int = lifter.point(int_size, 0);
                    let zero_ptr = lifter.point(ptr_size, 0);
                    let here = lifter.point(ptr_size, addr);
                    let data = lifter.mix(vec![
                        MixTerm::new(gate, 0, lifter.slot_of(&res, ValueType::Int)),
                        MixTerm::new(end, 0, zero_int),
                    ])?;
                    let link = lifter.mix(vec![MixTerm::new(gate, 0, here), MixTerm::new(end, 0, zero_ptr)])?;
                    let LiftedHeap::Fixed(cells) = &mut state.heap else {
                        return Err(Error::InvalidModel("loops need a fixed heap".into()));
                    };
                    cells[addr - 1].data = data;
                    if i == 0 {
                        result_ptr = Some(link);
                    } else {
                        cells[addr - 2].next = link;
                    }
                }
            }
        }
        ptr1 = lifter.tail(ptr1, &cells)?;
        if let Some(p2) = ptr2 {
            ptr2 = Some(lifter.tail(p2, &cells)?);
        }
    }
    state.t = start_t + len * nbody;
    Ok(match kind {
        LoopKind::Foreach => None,
        LoopKind::Combinator(Combinator::Foldli) => Some(acc),
        LoopKind::Combinator(_) => {
            let p = result_ptr.expect("at least one iteration");
            Some(lifter.value_reg(ValueType::Ptr, p))
        }
    })
}

/// Run a model on plain values and return the final state.
pub fn run_model(layout: &Layout, params: &ParamSet, inputs: &[Input]) -> Result<MachineState> {
    params.validate(layout)?;
    let mut tape = Tape::new();
    let nodes = ProgramNodes::attach(&mut tape, params)?;
    let mut lifter = Lifter::new(&mut tape, layout.domains);
    let run = build_run(&mut lifter, layout, &nodes, inputs)?;
    run.state.snapshot(&mut lifter)
}

/// Run a model and return the final state together with the output
/// register.
pub fn run_model_output(
    layout: &Layout,
    params: &ParamSet,
    inputs: &[Input],
) -> Result<(MachineState, crate::machine::Register)> {
    params.validate(layout)?;
    let mut tape = Tape::new();
    let nodes = ProgramNodes::attach(&mut tape, params)?;
    let mut lifter = Lifter::new(&mut tape, layout.domains);
    let run = build_run(&mut lifter, layout, &nodes, inputs)?;
    let state = run.state.snapshot(&mut lifter)?;
    let tape = &*lifter.tape;
    let output = crate::machine::Register {
        slots: run
            .output
            .slots
            .iter()
            .map(|&n| crate::machine::Dist::from_vec_unchecked(tape.value(n).to_vec()))
            .collect(),
    };
    Ok((state, output))
}

/// Instruction kinds available on a line.
pub fn line_kinds(layout: &Layout, ls: &LineSlots) -> Vec<InstrKind> {
    layout.slots[ls.instr]
        .choices
        .iter()
        .filter_map(|c| match c {
            super::layout::Choice::Instr(k) => Some(*k),
            _ => None,
        })
        .collect()
}
