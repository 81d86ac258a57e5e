//! Parameter layouts: the learnable slots of a model and the registers
//! each of them may refer to.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::spec::{Combinator, ModelSpec, Variant, IMMUTABLE_INITIAL_REGS};
use crate::error::Result;
use crate::machine::{Domains, InstrKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    /// Lines of an assembly program.
    Program,
    Prefix,
    Body,
    Suffix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineRef {
    pub block: Block,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotKind {
    Instr,
    Out,
    Arg1,
    Arg2,
    Cond,
    Branch,
    List1,
    List2,
    Combinator,
    AccInit,
    BodyResult,
    LoopOut,
    Return,
}

impl SlotKind {
    pub fn name(self) -> &'static str {
        match self {
            SlotKind::Instr => "instr",
            SlotKind::Out => "out",
            SlotKind::Arg1 => "arg1",
            SlotKind::Arg2 => "arg2",
            SlotKind::Cond => "cond",
            SlotKind::Branch => "branch",
            SlotKind::List1 => "list1",
            SlotKind::List2 => "list2",
            SlotKind::Combinator => "combinator",
            SlotKind::AccInit => "acc_init",
            SlotKind::BodyResult => "body_result",
            SlotKind::LoopOut => "loop_out",
            SlotKind::Return => "return",
        }
    }
}

/// One possible value of a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    Instr(InstrKind),
    Reg(usize),
    Line(usize),
    Combinator(Combinator),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub kind: SlotKind,
    pub line: Option<LineRef>,
    pub choices: Vec<Choice>,
}

impl Slot {
    pub fn size(&self) -> usize {
        self.choices.len()
    }

    /// Register indices of a register-valued slot.
    pub fn regs(&self) -> Vec<usize> {
        self.choices
            .iter()
            .filter_map(|c| match c {
                Choice::Reg(r) => Some(*r),
                _ => None,
            })
            .collect()
    }
}

/// Slot ids of one program line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSlots {
    pub line: LineRef,
    pub instr: usize,
    pub out: Option<usize>,
    pub arg1: usize,
    pub arg2: usize,
    pub cond: Option<usize>,
    pub branch: Option<usize>,
    /// Register written by this line in immutable machines.
    pub target: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopSlots {
    pub combinator: Option<usize>,
    pub list1: usize,
    pub list2: Option<usize>,
    pub acc_init: Option<usize>,
    pub body_result: Option<usize>,
    pub loop_out: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClosureVar {
    Ele,
    Ele2,
    Acc,
    Idx,
}

impl ClosureVar {
    pub const ALL: [ClosureVar; 4] = [ClosureVar::Ele, ClosureVar::Ele2, ClosureVar::Acc, ClosureVar::Idx];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegRole {
    /// A mutable register.
    Global(usize),
    /// An immutable register initialized with an input (or zero).
    Initial(usize),
    Prefix(usize),
    /// Result of the loop combinator.
    LoopResult,
    Suffix(usize),
    Closure(ClosureVar),
    /// Output of a loop-body line (immutable machines).
    Body(usize),
}

/// The learnable structure of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub spec: ModelSpec,
    pub domains: Domains,
    pub slots: Vec<Slot>,
    pub lines: Vec<LineSlots>,
    pub loop_slots: Option<LoopSlots>,
    pub ret: Option<usize>,
    pub regs: Vec<RegRole>,
}

impl Layout {
    pub fn new(spec: &ModelSpec) -> Result<Layout> {
        spec.validate()?;
        let mut b = Builder {
            slots: vec![],
            lines: vec![],
        };
        let v = spec.variant;
        let mut loop_slots = None;
        let mut ret = None;
        let regs;
        if v.is_assembly() {
            regs = (0..spec.registers).map(RegRole::Global).collect::<Vec<_>>();
            let all: Vec<usize> = (0..spec.registers).collect();
            for p in 0..spec.program_len {
                let line = LineRef {
                    block: Block::Program,
                    index: p,
                };
                b.line(line, &InstrKind::ASSEMBLY, Some(&all), &all, false, Some(spec.program_len), None);
            }
        } else if !v.is_immutable() {
            let globals: Vec<usize> = (0..spec.registers).collect();
            let mut roles: Vec<RegRole> = globals.iter().map(|&g| RegRole::Global(g)).collect();
            let closure: &[ClosureVar] = if spec.body == 0 {
                &[]
            } else if v.has_combinators() {
                &ClosureVar::ALL
            } else {
                &[ClosureVar::Ele]
            };
            let closure_regs: Vec<usize> = (0..closure.len()).map(|i| roles.len() + i).collect();
            roles.extend(closure.iter().map(|&c| RegRole::Closure(c)));
            let in_body: Vec<usize> = globals.iter().chain(&closure_regs).copied().collect();
            for i in 0..spec.prefix {
                b.structured_line(Block::Prefix, i, Some(&globals), &globals, None);
            }
            if spec.body > 0 {
                for i in 0..spec.body {
                    b.structured_line(Block::Body, i, Some(&globals), &in_body, None);
                }
                loop_slots = Some(b.loop_slots(spec, &globals, &in_body, Some(&globals)));
            }
            for i in 0..spec.suffix {
                b.structured_line(Block::Suffix, i, Some(&globals), &globals, None);
            }
            regs = roles;
        } else {
            let mut roles: Vec<RegRole> = (0..IMMUTABLE_INITIAL_REGS).map(RegRole::Initial).collect();
            let prefix_regs: Vec<usize> = (0..spec.prefix).map(|i| roles.len() + i).collect();
            roles.extend((0..spec.prefix).map(RegRole::Prefix));
            let result_reg = (spec.body > 0).then(|| {
                roles.push(RegRole::LoopResult);
                roles.len() - 1
            });
            let suffix_regs: Vec<usize> = (0..spec.suffix).map(|i| roles.len() + i).collect();
            roles.extend((0..spec.suffix).map(RegRole::Suffix));
            let mut closure_regs = vec![];
            let mut body_regs = vec![];
            if spec.body > 0 {
                closure_regs = (0..4).map(|i| roles.len() + i).collect();
                roles.extend(ClosureVar::ALL.iter().map(|&c| RegRole::Closure(c)));
                body_regs = (0..spec.body).map(|i| roles.len() + i).collect();
                roles.extend((0..spec.body).map(RegRole::Body));
            }
            let initial: Vec<usize> = (0..IMMUTABLE_INITIAL_REGS).collect();
            let mut visible = initial.clone();
            for (i, &r) in prefix_regs.iter().enumerate() {
                b.structured_line(Block::Prefix, i, None, &visible, Some(r));
                visible.push(r);
            }
            let outer = visible.clone();
            if spec.body > 0 {
                let mut in_body: Vec<usize> = outer.iter().chain(&closure_regs).copied().collect();
                for (i, &r) in body_regs.iter().enumerate() {
                    b.structured_line(Block::Body, i, None, &in_body, Some(r));
                    in_body.push(r);
                }
                loop_slots = Some(b.loop_slots(spec, &outer, &in_body, None));
                visible.extend(result_reg);
            }
            for (i, &r) in suffix_regs.iter().enumerate() {
                b.structured_line(Block::Suffix, i, None, &visible, Some(r));
                visible.push(r);
            }
            ret = Some(b.slot(SlotKind::Return, None, visible.iter().map(|&r| Choice::Reg(r)).collect()));
            regs = roles;
        }
        Ok(Layout {
            spec: spec.clone(),
            domains: spec.domains(),
            slots: b.slots,
            lines: b.lines,
            loop_slots,
            ret,
            regs,
        })
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    /// Total number of learnable logits.
    pub fn num_logits(&self) -> usize {
        self.slots.iter().map(Slot::size).sum()
    }

    /// log10 of the number of distinct parameter assignments.
    pub fn program_space_log10(&self) -> f64 {
        self.slots.iter().map(|s| (s.size() as f64).log10()).sum()
    }

    pub fn lines_in(&self, block: Block) -> impl Iterator<Item = &LineSlots> {
        self.lines.iter().filter(move |l| l.line.block == block)
    }

    /// Register holding the program output in mutable machines.
    pub fn output_reg(&self) -> Option<usize> {
        (!self.spec.variant.is_immutable()).then(|| self.spec.registers - 1)
    }

    pub fn closure_reg(&self, var: ClosureVar) -> Option<usize> {
        self.regs.iter().position(|&r| r == RegRole::Closure(var))
    }

    pub fn body_reg(&self, j: usize) -> Option<usize> {
        self.regs.iter().position(|&r| r == RegRole::Body(j))
    }

    pub fn loop_result_reg(&self) -> Option<usize> {
        self.regs.iter().position(|&r| r == RegRole::LoopResult)
    }

    /// Number of registers initialized from inputs.
    pub fn initial_regs(&self) -> usize {
        if self.spec.variant.is_immutable() {
            IMMUTABLE_INITIAL_REGS
        } else {
            self.spec.registers
        }
    }

    /// Printable register name.
    pub fn reg_name(&self, reg: usize, combinator: Option<Combinator>) -> String {
        let imm_index = |r: usize| {
            self.regs[..r]
                .iter()
                .filter(|x| {
                    matches!(
                        x,
                        RegRole::Initial(_) | RegRole::Prefix(_) | RegRole::LoopResult | RegRole::Suffix(_)
                    )
                })
                .count()
        };
        match self.regs[reg] {
            RegRole::Global(i) => format!("r{i}"),
            RegRole::Initial(_) | RegRole::Prefix(_) | RegRole::LoopResult | RegRole::Suffix(_) => {
                format!("r{}", imm_index(reg))
            }
            RegRole::Body(j) => format!("c{j}"),
            RegRole::Closure(c) => match c {
                ClosureVar::Ele => match combinator {
                    Some(Combinator::ZipWithi) => "ele1".into(),
                    _ => "ele".into(),
                },
                ClosureVar::Ele2 => "ele2".into(),
                ClosureVar::Acc => "acc".into(),
                ClosureVar::Idx => "idx".into(),
            },
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.slots.iter().enumerate() {
            match s.line {
                Some(l) => write!(f, "{i:4} {:?}[{}] {}", l.block, l.index, s.kind.name())?,
                None => write!(f, "{i:4} {}", s.kind.name())?,
            }
            writeln!(f, " ({} choices)", s.size())?;
        }
        Ok(())
    }
}

struct Builder {
    slots: Vec<Slot>,
    lines: Vec<LineSlots>,
}

impl Builder {
    fn slot(&mut self, kind: SlotKind, line: Option<LineRef>, choices: Vec<Choice>) -> usize {
        self.slots.push(Slot { kind, line, choices });
        self.slots.len() - 1
    }

    fn regs(rs: &[usize]) -> Vec<Choice> {
        rs.iter().map(|&r| Choice::Reg(r)).collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn line(
        &mut self,
        line: LineRef,
        kinds: &[InstrKind],
        out: Option<&[usize]>,
        readable: &[usize],
        cond: bool,
        branch: Option<usize>,
        target: Option<usize>,
    ) {
        let l = Some(line);
        let instr = self.slot(SlotKind::Instr, l, kinds.iter().map(|&k| Choice::Instr(k)).collect());
        let out = out.map(|o| self.slot(SlotKind::Out, l, Self::regs(o)));
        let arg1 = self.slot(SlotKind::Arg1, l, Self::regs(readable));
        let arg2 = self.slot(SlotKind::Arg2, l, Self::regs(readable));
        let cond = cond.then(|| self.slot(SlotKind::Cond, l, Self::regs(readable)));
        let branch = branch.map(|n| self.slot(SlotKind::Branch, l, (0..n).map(Choice::Line).collect()));
        self.lines.push(LineSlots {
            line,
            instr,
            out,
            arg1,
            arg2,
            cond,
            branch,
            target,
        });
    }

    fn structured_line(
        &mut self,
        block: Block,
        index: usize,
        out: Option<&[usize]>,
        readable: &[usize],
        target: Option<usize>,
    ) {
        let line = LineRef { block, index };
        self.line(line, &InstrKind::STRUCTURED, out, readable, true, None, target);
    }

    fn loop_slots(
        &mut self,
        spec: &ModelSpec,
        outer: &[usize],
        in_body: &[usize],
        loop_out: Option<&[usize]>,
    ) -> LoopSlots {
        let combinators = &spec.combinators;
        let has = |c: Combinator| combinators.contains(&c);
        let combinator = spec.variant.has_combinators().then(|| {
            self.slot(
                SlotKind::Combinator,
                None,
                combinators.iter().map(|&c| Choice::Combinator(c)).collect(),
            )
        });
        let list1 = self.slot(SlotKind::List1, None, Self::regs(outer));
        let list2 = has(Combinator::ZipWithi).then(|| self.slot(SlotKind::List2, None, Self::regs(outer)));
        let acc_init = has(Combinator::Foldli).then(|| self.slot(SlotKind::AccInit, None, Self::regs(outer)));
        let body_result = spec
            .variant
            .has_combinators()
            .then(|| self.slot(SlotKind::BodyResult, None, Self::regs(in_body)));
        let loop_out = match loop_out {
            Some(o) if spec.variant.has_combinators() => Some(self.slot(SlotKind::LoopOut, None, Self::regs(o))),
            _ => None,
        };
        LoopSlots {
            combinator,
            list1,
            list2,
            acc_init,
            body_result,
            loop_out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Preset;
    use crate::value::InputKind;

    #[test]
    fn assembly_line_shape() {
        let mut spec = Preset::SimpleLoop.spec(Variant::A, &[InputKind::List]);
        spec.program_len = 2;
        spec.registers = 3;
        let l = Layout::new(&spec).unwrap();
        let sizes: Vec<usize> = l.slots.iter().map(Slot::size).collect();
        assert_eq!(sizes, vec![16, 3, 3, 3, 2, 16, 3, 3, 3, 2]);
        assert!(l.loop_slots.is_none() && l.ret.is_none());
        assert_eq!(l.output_reg(), Some(2));
    }

    #[test]
    fn immutable_scoping() {
        let mut spec = Preset::SimpleLoop.spec(Variant::CTI, &[InputKind::List]);
        spec.prefix = 0;
        spec.body = 2;
        spec.suffix = 1;
        let l = Layout::new(&spec).unwrap();
        assert!(l.slots.iter().all(|s| s.kind != SlotKind::Out));
        let body: Vec<&LineSlots> = l.lines_in(Block::Body).collect();
        // initial registers and closure, then also the first body output
        assert_eq!(l.slots[body[0].arg1].size(), 2 + 4);
        assert_eq!(l.slots[body[1].arg1].size(), 2 + 4 + 1);
        let suffix = l.lines_in(Block::Suffix).next().unwrap();
        let names: Vec<String> = l.slots[suffix.arg1]
            .regs()
            .iter()
            .map(|&r| l.reg_name(r, None))
            .collect();
        assert_eq!(names, ["r0", "r1", "r2"]);
        let ret = &l.slots[l.ret.unwrap()];
        assert_eq!(ret.size(), 4);
    }

    #[test]
    fn straightline_program_space() {
        let inputs = [InputKind::List];
        let size = |v| Layout::new(&Preset::Straightline.spec(v, &inputs)).unwrap().program_space_log10();
        for v in [Variant::A, Variant::AF, Variant::CI, Variant::CTI] {
            let s = size(v);
            assert!((37.0..=41.0).contains(&s), "{v}: {s}");
        }
        let line = 14f64 * 3.0 * 3.0 * 3.0 * 3.0;
        assert!((size(Variant::C) - 11.0 * line.log10()).abs() < 1e-9);
    }
}
