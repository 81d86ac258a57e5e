use diffsynth::discrete::{enumerate, pretty, run_program, Budget, ConcreteProgram};
use diffsynth::machine::InstrKind;
use diffsynth::models::{Block, Choice, ClosureVar, Combinator, Layout, LineRef, Preset, RegRole, Variant};
use diffsynth::value::{Example, Input, InputKind, Output, OutputKind};

struct Builder<'a> {
    layout: &'a Layout,
    program: ConcreteProgram,
}

impl<'a> Builder<'a> {
    fn new(layout: &'a Layout) -> Self {
        Builder {
            layout,
            program: ConcreteProgram::noops(layout),
        }
    }

    fn set(&mut self, slot: usize, choice: Choice) {
        self.program.set(self.layout, slot, choice).unwrap();
    }

    fn line(&mut self, block: Block, index: usize, kind: InstrKind, out: Option<usize>, args: &[usize]) {
        let ls = self
            .layout
            .lines
            .iter()
            .find(|l| l.line == LineRef { block, index })
            .unwrap()
            .clone();
        self.set(ls.instr, Choice::Instr(kind));
        if let (Some(slot), Some(o)) = (ls.out, out) {
            self.set(slot, Choice::Reg(o));
        }
        let mut args = args.iter().copied();
        if kind == InstrKind::Ite {
            self.set(ls.cond.unwrap(), Choice::Reg(args.next().unwrap()));
        }
        if let Some(a) = args.next() {
            self.set(ls.arg1, Choice::Reg(a));
        }
        if let Some(a) = args.next() {
            self.set(ls.arg2, Choice::Reg(a));
        }
    }

    fn combinator(&mut self, c: Combinator, list1: usize, second: Option<usize>, body_result: usize) {
        let ls = self.layout.loop_slots.clone().unwrap();
        self.set(ls.combinator.unwrap(), Choice::Combinator(c));
        self.set(ls.list1, Choice::Reg(list1));
        match c {
            Combinator::Foldli => self.set(ls.acc_init.unwrap(), Choice::Reg(second.unwrap())),
            Combinator::ZipWithi => self.set(ls.list2.unwrap(), Choice::Reg(second.unwrap())),
            Combinator::Mapi => {}
        }
        self.set(ls.body_result.unwrap(), Choice::Reg(body_result));
    }

    fn ret(&mut self, r: usize) {
        self.set(self.layout.ret.unwrap(), Choice::Reg(r));
    }
}

fn immutable(inputs: &[InputKind]) -> Layout {
    Layout::new(&Preset::Loop.spec(Variant::CTI, inputs)).unwrap()
}

fn closure(layout: &Layout, v: ClosureVar) -> usize {
    layout.closure_reg(v).unwrap()
}

fn body(layout: &Layout, j: usize) -> usize {
    layout.body_reg(j).unwrap()
}

fn result(layout: &Layout) -> usize {
    layout.loop_result_reg().unwrap()
}

fn list(xs: &[usize]) -> Input {
    Input::List(xs.to_vec())
}

fn run(layout: &Layout, program: &ConcreteProgram, inputs: &[Input], kind: OutputKind) -> Option<Output> {
    run_program(layout, program, inputs, kind).unwrap()
}

#[test]
fn fold_counts_list_length() {
    let l = immutable(&[InputKind::List]);
    let mut b = Builder::new(&l);
    b.line(Block::Body, 0, InstrKind::Inc, None, &[closure(&l, ClosureVar::Acc)]);
    b.combinator(Combinator::Foldli, 0, Some(1), body(&l, 0));
    b.ret(result(&l));
    let p = b.program;
    assert_eq!(run(&l, &p, &[list(&[4, 4, 4])], OutputKind::Scalar), Some(Output::Scalar(3)));
    assert_eq!(run(&l, &p, &[list(&[])], OutputKind::Scalar), Some(Output::Scalar(0)));
    let text = pretty(&l, &p).unwrap();
    assert!(text.contains("let r3 = foldli r0 r1 (λ ele acc idx ->"), "{text}");
    assert!(text.contains("let c0 = acc + 1 in"), "{text}");
    assert!(text.contains("# "), "unused lines are commented out:\n{text}");
    assert!(text.trim_end().ends_with("return r3"), "{text}");
}

#[test]
fn fold_takes_maximum_with_conditional() {
    let l = immutable(&[InputKind::List]);
    let (ele, acc) = (closure(&l, ClosureVar::Ele), closure(&l, ClosureVar::Acc));
    let mut b = Builder::new(&l);
    b.line(Block::Body, 0, InstrKind::Gt, None, &[ele, acc]);
    b.line(Block::Body, 1, InstrKind::Ite, None, &[body(&l, 0), ele, acc]);
    b.combinator(Combinator::Foldli, 0, Some(1), body(&l, 1));
    b.ret(result(&l));
    let p = b.program;
    assert_eq!(run(&l, &p, &[list(&[2, 9, 5])], OutputKind::Scalar), Some(Output::Scalar(9)));
    let text = pretty(&l, &p).unwrap();
    assert!(text.contains("if c0 then ele else acc"), "{text}");
}

#[test]
fn fold_sums_elements() {
    let l = immutable(&[InputKind::List]);
    let mut b = Builder::new(&l);
    let (ele, acc) = (closure(&l, ClosureVar::Ele), closure(&l, ClosureVar::Acc));
    b.line(Block::Body, 0, InstrKind::Add, None, &[ele, acc]);
    b.combinator(Combinator::Foldli, 0, Some(1), body(&l, 0));
    b.ret(result(&l));
    assert_eq!(
        run(&l, &b.program, &[list(&[1, 2, 3])], OutputKind::Scalar),
        Some(Output::Scalar(6))
    );
}

#[test]
fn map_increments_each_element() {
    let l = immutable(&[InputKind::List]);
    let mut b = Builder::new(&l);
    b.line(Block::Body, 0, InstrKind::Inc, None, &[closure(&l, ClosureVar::Ele)]);
    b.combinator(Combinator::Mapi, 0, None, body(&l, 0));
    b.ret(result(&l));
    let p = b.program;
    assert_eq!(run(&l, &p, &[list(&[1, 2])], OutputKind::List), Some(Output::List(vec![2, 3])));
    assert_eq!(run(&l, &p, &[list(&[])], OutputKind::List), Some(Output::List(vec![])));
    assert!(pretty(&l, &p).unwrap().contains("mapi r0 (λ ele idx ->"));
}

#[test]
fn zip_adds_pairwise() {
    let l = immutable(&[InputKind::List, InputKind::List]);
    let mut b = Builder::new(&l);
    let (e1, e2) = (closure(&l, ClosureVar::Ele), closure(&l, ClosureVar::Ele2));
    b.line(Block::Body, 0, InstrKind::Add, None, &[e1, e2]);
    b.combinator(Combinator::ZipWithi, 0, Some(1), body(&l, 0));
    b.ret(result(&l));
    let p = b.program;
    assert_eq!(
        run(&l, &p, &[list(&[1, 2]), list(&[3, 4])], OutputKind::List),
        Some(Output::List(vec![4, 6]))
    );
    assert!(pretty(&l, &p).unwrap().contains("zipWithi r0 r1 (λ ele1 ele2 idx ->"));
}

#[test]
fn mutable_fold_writes_loop_output_register() {
    let l = Layout::new(&Preset::Loop.spec(Variant::C, &[InputKind::List])).unwrap();
    let out = l.spec.registers - 1;
    let acc = closure(&l, ClosureVar::Acc);
    let mut b = Builder::new(&l);
    b.line(Block::Prefix, 0, InstrKind::Zero, Some(1), &[]);
    b.line(Block::Body, 0, InstrKind::Inc, Some(1), &[acc]);
    b.combinator(Combinator::Foldli, 0, Some(1), 1);
    let ls = l.loop_slots.clone().unwrap();
    b.set(ls.loop_out.unwrap(), Choice::Reg(out));
    let p = b.program;
    assert_eq!(run(&l, &p, &[list(&[7, 7, 7, 7])], OutputKind::Scalar), Some(Output::Scalar(4)));
    let text = pretty(&l, &p).unwrap();
    assert!(text.contains("r2 <- foldli r0 r1 (λ ele acc idx ->"), "{text}");
}

#[test]
fn foreach_counts_with_global_register() {
    let l = Layout::new(&Preset::SimpleLoop.spec(Variant::AL, &[InputKind::List])).unwrap();
    let out = l.spec.registers - 1;
    let mut b = Builder::new(&l);
    b.line(Block::Body, 0, InstrKind::Inc, Some(out), &[out]);
    let ls = l.loop_slots.clone().unwrap();
    b.set(ls.list1, Choice::Reg(0));
    let p = b.program;
    assert_eq!(run(&l, &p, &[list(&[5, 6, 7])], OutputKind::Scalar), Some(Output::Scalar(3)));
    let text = pretty(&l, &p).unwrap();
    assert!(text.contains("for ele in r0:"), "{text}");
    assert!(text.contains("    r3 <- r3 + 1"), "{text}");
    assert!(text.contains("# "), "{text}");
}

#[test]
fn assembly_loop_counts_list_length() {
    // 0: jz r0 -> 4 ; 1: r0 <- tail r0 ; 2: r3 <- r3 + 1 ; 3: jnz r0 -> 1 ; 4: return r3
    let l = Layout::new(&Preset::SimpleLoop.spec(Variant::A, &[InputKind::List])).unwrap();
    let mut b = Builder::new(&l);
    b.line(Block::Program, 0, InstrKind::Jz, None, &[0]);
    let ls0 = l.lines[0].clone();
    b.set(ls0.branch.unwrap(), Choice::Line(4));
    b.line(Block::Program, 1, InstrKind::Tail, Some(0), &[0]);
    b.line(Block::Program, 2, InstrKind::Inc, Some(3), &[3]);
    b.line(Block::Program, 3, InstrKind::Jnz, None, &[0]);
    b.set(l.lines[3].branch.unwrap(), Choice::Line(1));
    b.line(Block::Program, 4, InstrKind::Return, None, &[3]);
    let p = b.program;
    for xs in [vec![], vec![1], vec![1, 2, 3]] {
        assert_eq!(
            run(&l, &p, &[Input::List(xs.clone())], OutputKind::Scalar),
            Some(Output::Scalar(xs.len())),
            "{xs:?}"
        );
    }
    let text = pretty(&l, &p).unwrap();
    assert!(text.contains("3: jnz r0 -> 1"), "{text}");
}

#[test]
fn register_roles_are_named() {
    let l = immutable(&[InputKind::List]);
    assert_eq!(l.regs[result(&l)], RegRole::LoopResult);
    assert_eq!(l.reg_name(closure(&l, ClosureVar::Ele), Some(Combinator::ZipWithi)), "ele1");
}

fn dup_examples(k: usize) -> Vec<Example> {
    (1..5)
        .map(|x| Example::new(vec![Input::Scalar(x)], Output::List(vec![x; k])))
        .collect()
}

#[test]
fn enumerator_finds_single_cons_for_dup1() {
    let spec = Preset::Straightline.spec(Variant::C, &[InputKind::Scalar]);
    let l = Layout::new(&spec).unwrap();
    let ex = dup_examples(1);
    let out = enumerate(&l, &ex, OutputKind::List, Budget::nodes(1_000_000)).unwrap();
    let p = out.program.expect("a one-line solution exists");
    assert_eq!(out.active_lines, Some(1));
    let d = p.decode(&l).unwrap();
    let active: Vec<_> = d.lines.iter().filter(|x| x.kind != InstrKind::Noop).collect();
    assert_eq!(active.len(), 1);
    assert_eq!(active[0].kind, InstrKind::Cons);
}

#[test]
fn enumerator_reports_contradictions() {
    let spec = Preset::Straightline.spec(Variant::CTI, &[InputKind::Scalar]);
    let l = Layout::new(&spec).unwrap();
    let ex = vec![
        Example::new(vec![Input::Scalar(2)], Output::Scalar(3)),
        Example::new(vec![Input::Scalar(2)], Output::Scalar(4)),
    ];
    let out = enumerate(&l, &ex, OutputKind::Scalar, Budget::nodes(200_000)).unwrap();
    assert!(out.program.is_none());
}

#[test]
fn enumerated_programs_fit_their_examples() {
    let l = immutable(&[InputKind::List]);
    let ex: Vec<Example> = [vec![3, 1], vec![], vec![5, 5, 5], vec![2, 4, 6, 1]]
        .into_iter()
        .map(|xs| {
            let s = xs.iter().sum();
            Example::new(vec![Input::List(xs)], Output::Scalar(s))
        })
        .collect();
    let out = enumerate(&l, &ex, OutputKind::Scalar, Budget::nodes(5_000_000)).unwrap();
    let p = out.program.expect("sum is expressible");
    for e in &ex {
        assert_eq!(run(&l, &p, &e.inputs, OutputKind::Scalar).as_ref(), Some(&e.output));
    }
}

#[test]
fn enumerator_rejects_empty_budget() {
    let l = immutable(&[InputKind::List]);
    let ex = vec![Example::new(vec![list(&[1])], Output::Scalar(1))];
    assert!(enumerate(&l, &ex, OutputKind::Scalar, Budget::nodes(0)).is_err());
}
