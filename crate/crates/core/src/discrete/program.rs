use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::machine::{argmax, InstrKind};
use crate::models::{Block, Choice, Combinator, Layout, ParamSet};

/// A fully determined program: one choice index per layout slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConcreteProgram {
    pub choices: Vec<usize>,
}

impl ConcreteProgram {
    pub fn validate(&self, layout: &Layout) -> Result<()> {
        if self.choices.len() != layout.num_slots() {
            return Err(Error::InvalidProgram(format!(
                "{} choices for {} slots",
                self.choices.len(),
                layout.num_slots()
            )));
        }
        for (i, (&c, s)) in self.choices.iter().zip(&layout.slots).enumerate() {
            if c >= s.size() {
                return Err(Error::InvalidProgram(format!(
                    "choice {c} out of range for slot {i} ({} options)",
                    s.size()
                )));
            }
        }
        Ok(())
    }

    /// Most likely choice of every slot, ties going to the lowest index.
    pub fn discretize(params: &ParamSet) -> Self {
        ConcreteProgram {
            choices: params.logits.iter().map(|l| argmax(l)).collect(),
        }
    }

    /// A uniformly random program.
    pub fn random<R: Rng + ?Sized>(layout: &Layout, rng: &mut R) -> Self {
        ConcreteProgram {
            choices: layout.slots.iter().map(|s| rng.random_range(0..s.size())).collect(),
        }
    }

    /// The all-first-choice program.
    pub fn first(layout: &Layout) -> Self {
        ConcreteProgram {
            choices: vec![0; layout.num_slots()],
        }
    }

    /// Every instruction slot set to `noop`, everything else to its first
    /// choice.
    pub fn noops(layout: &Layout) -> Self {
        let mut p = Self::first(layout);
        for ls in &layout.lines {
            p.set(layout, ls.instr, Choice::Instr(InstrKind::Noop))
                .expect("every line can be a noop");
        }
        p
    }

    /// Set `slot` to `choice`, failing if the slot cannot take it.
    pub fn set(&mut self, layout: &Layout, slot: usize, choice: Choice) -> Result<()> {
        let s = layout
            .slots
            .get(slot)
            .ok_or_else(|| Error::InvalidProgram(format!("no slot {slot}")))?;
        let i = s.choices.iter().position(|&c| c == choice).ok_or_else(|| {
            Error::InvalidProgram(format!("slot {slot} ({}) cannot take {choice:?}", s.kind.name()))
        })?;
        self.choices[slot] = i;
        Ok(())
    }

    /// Resolve slot choices into concrete lines and registers.
    pub fn decode(&self, layout: &Layout) -> Result<Decoded> {
        self.validate(layout)?;
        let pick = |slot: usize| layout.slots[slot].choices[self.choices[slot]];
        let reg = |slot: usize| match pick(slot) {
            Choice::Reg(r) => r,
            other => unreachable!("register slot holds {other:?}"),
        };
        let lines = layout
            .lines
            .iter()
            .map(|ls| {
                let kind = match pick(ls.instr) {
                    Choice::Instr(k) => k,
                    other => unreachable!("instruction slot holds {other:?}"),
                };
                DLine {
                    block: ls.line.block,
                    kind,
                    out: ls.out.map(reg),
                    arg1: reg(ls.arg1),
                    arg2: reg(ls.arg2),
                    cond: ls.cond.map(reg),
                    branch: ls.branch.map(|b| match pick(b) {
                        Choice::Line(l) => l,
                        other => unreachable!("branch slot holds {other:?}"),
                    }),
                    target: ls.target,
                }
            })
            .collect();
        let lp = layout.loop_slots.as_ref().map(|ls| DLoop {
            combinator: match ls.combinator {
                Some(s) => match pick(s) {
                    Choice::Combinator(c) => Some(c),
                    other => unreachable!("combinator slot holds {other:?}"),
                },
                None => None,
            },
            list1: reg(ls.list1),
            list2: ls.list2.map(reg),
            acc_init: ls.acc_init.map(reg),
            body_result: ls.body_result.map(reg),
            loop_out: ls.loop_out.map(reg),
        });
        Ok(Decoded {
            lines,
            loop_: lp,
            ret: layout.ret.map(reg),
        })
    }
}

/// One program line with its choices resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DLine {
    pub block: Block,
    pub kind: InstrKind,
    pub out: Option<usize>,
    pub arg1: usize,
    pub arg2: usize,
    pub cond: Option<usize>,
    pub branch: Option<usize>,
    pub target: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DLoop {
    /// `None` for the plain `foreach` loop.
    pub combinator: Option<Combinator>,
    pub list1: usize,
    pub list2: Option<usize>,
    pub acc_init: Option<usize>,
    pub body_result: Option<usize>,
    pub loop_out: Option<usize>,
}

/// A program with every slot resolved to its concrete meaning.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub lines: Vec<DLine>,
    pub loop_: Option<DLoop>,
    pub ret: Option<usize>,
}

impl Decoded {
    pub fn block(&self, block: Block) -> impl Iterator<Item = &DLine> {
        self.lines.iter().filter(move |l| l.block == block)
    }
}
