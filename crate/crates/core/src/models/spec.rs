use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::machine::Domains;
use crate::value::InputKind;

/// Number of initial registers of immutable machines: the inputs, padded
/// with zero-valued registers.
pub const IMMUTABLE_INITIAL_REGS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Assembly with jumps and a stack-allocated heap.
    #[serde(rename = "A")]
    A,
    /// Assembly with one heap cell per timestep.
    #[serde(rename = "A+F")]
    AF,
    /// Prefix, `foreach` loop and suffix over mutable registers.
    #[serde(rename = "A+L")]
    AL,
    /// Combinators over mutable registers.
    #[serde(rename = "C")]
    C,
    /// Combinators over immutable registers.
    #[serde(rename = "C+I")]
    CI,
    /// Combinators over typed mutable registers.
    #[serde(rename = "C+T")]
    CT,
    /// Combinators over typed immutable registers.
    #[serde(rename = "C+T+I")]
    CTI,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::A,
        Variant::AF,
        Variant::AL,
        Variant::C,
        Variant::CI,
        Variant::CT,
        Variant::CTI,
    ];

    /// Column order used in result tables.
    pub const REPORT_ORDER: [Variant; 7] = [
        Variant::CTI,
        Variant::CT,
        Variant::CI,
        Variant::C,
        Variant::A,
        Variant::AF,
        Variant::AL,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::A => "A",
            Variant::AF => "A+F",
            Variant::AL => "A+L",
            Variant::C => "C",
            Variant::CI => "C+I",
            Variant::CT => "C+T",
            Variant::CTI => "C+T+I",
        }
    }

    /// Short name without punctuation, usable in file names.
    pub fn slug(self) -> &'static str {
        match self {
            Variant::A => "a",
            Variant::AF => "af",
            Variant::AL => "al",
            Variant::C => "c",
            Variant::CI => "ci",
            Variant::CT => "ct",
            Variant::CTI => "cti",
        }
    }

    pub fn is_assembly(self) -> bool {
        matches!(self, Variant::A | Variant::AF)
    }

    pub fn has_stack_pointer(self) -> bool {
        self == Variant::A
    }

    pub fn has_combinators(self) -> bool {
        matches!(self, Variant::C | Variant::CI | Variant::CT | Variant::CTI)
    }

    pub fn is_immutable(self) -> bool {
        matches!(self, Variant::CI | Variant::CTI)
    }

    pub fn is_typed(self) -> bool {
        matches!(self, Variant::CT | Variant::CTI)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !matches!(c, '+' | '-' | '_' | ' '))
            .collect();
        Ok(match key.as_str() {
            "a" => Variant::A,
            "af" => Variant::AF,
            "al" => Variant::AL,
            "c" => Variant::C,
            "ci" => Variant::CI,
            "ct" => Variant::CT,
            "cti" | "ctpi" => Variant::CTI,
            _ => return Err(Error::Config(format!("unknown model `{s}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Combinator {
    Mapi,
    ZipWithi,
    Foldli,
}

impl Combinator {
    pub const ALL: [Combinator; 3] = [Combinator::Mapi, Combinator::ZipWithi, Combinator::Foldli];

    pub fn name(self) -> &'static str {
        match self {
            Combinator::Mapi => "mapi",
            Combinator::ZipWithi => "zipWithi",
            Combinator::Foldli => "foldli",
        }
    }

    /// Whether the combinator builds a fresh output list.
    pub fn builds_list(self) -> bool {
        matches!(self, Combinator::Mapi | Combinator::ZipWithi)
    }
}

impl fmt::Display for Combinator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A model variant together with its size hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Integers range over `[0, m)`.
    pub m: usize,
    /// Register count of mutable machines.
    pub registers: usize,
    /// Lines of an assembly program.
    pub program_len: usize,
    /// Steps an assembly program runs for.
    pub timesteps: usize,
    pub prefix: usize,
    pub body: usize,
    pub suffix: usize,
    /// Longest input list; loops are unrolled this many times.
    pub max_list_len: usize,
    pub combinators: Vec<Combinator>,
    /// Kinds of the program inputs, in register order.
    pub inputs: Vec<InputKind>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if self.m < 2 {
            return bad(format!("m = {} must be at least 2", self.m));
        }
        if self.max_list_len == 0 {
            return bad("max_list_len must be positive".into());
        }
        if self.inputs.is_empty() {
            return bad("at least one input is required".into());
        }
        let v = self.variant;
        if v.is_immutable() {
            if self.inputs.len() > IMMUTABLE_INITIAL_REGS {
                return bad(format!(
                    "immutable machines take at most {IMMUTABLE_INITIAL_REGS} inputs"
                ));
            }
        } else if self.inputs.len() > self.registers {
            return bad(format!(
                "{} inputs do not fit into {} registers",
                self.inputs.len(),
                self.registers
            ));
        }
        if v.is_assembly() {
            if self.program_len == 0 || self.timesteps == 0 {
                return bad("assembly programs need at least one line and one step".into());
            }
            if self.prefix + self.body + self.suffix > 0 {
                return bad("assembly programs have no prefix, body or suffix".into());
            }
        } else {
            if self.prefix + self.body + self.suffix == 0 {
                return bad("structured programs need at least one line".into());
            }
            if self.program_len != 0 || self.timesteps != 0 {
                return bad("structured programs have no assembly program length".into());
            }
        }
        if !v.has_combinators() && !self.combinators.is_empty() {
            return bad(format!("{v} has no combinators"));
        }
        if v.has_combinators() && self.body > 0 && self.combinators.is_empty() {
            return bad(format!("{v} with a loop body needs at least one combinator"));
        }
        let mut sorted = self.combinators.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.combinators.len() {
            return bad("duplicate combinators".into());
        }
        if self.body > 0 && self.max_list_len > self.m {
            return bad("loop indices must fit into the integer domain".into());
        }
        Ok(())
    }

    pub fn list_inputs(&self) -> usize {
        self.inputs.iter().filter(|&&k| k == InputKind::List).count()
    }

    /// Timesteps of one run (lines executed, with loops unrolled).
    pub fn total_timesteps(&self) -> usize {
        if self.variant.is_assembly() {
            self.timesteps
        } else {
            self.prefix + self.max_list_len * self.body + self.suffix
        }
    }

    /// Whether the loop builds a list in dedicated output cells.
    pub fn has_output_cells(&self) -> bool {
        self.body > 0 && self.combinators.iter().any(|c| c.builds_list())
    }

    /// Heap size: input lists, one cell per timestep, and the output cells
    /// of list-building combinators.
    pub fn heap_size(&self) -> usize {
        let mut h = self.list_inputs() * self.max_list_len + self.total_timesteps();
        if self.has_output_cells() {
            h += self.max_list_len;
        }
        h
    }

    pub fn domains(&self) -> Domains {
        Domains::new(self.variant.is_typed(), self.m, self.heap_size())
    }
}

/// Bundled experiment configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Eleven statements, three registers, `m = 20`.
    Straightline,
    /// Six assembly lines or a two-line loop body, four registers.
    SimpleLoop,
    /// Prefix 1, body 3, suffix 2, `m = 32`.
    Loop,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Straightline, Preset::SimpleLoop, Preset::Loop];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Straightline => "straightline",
            Preset::SimpleLoop => "simple-loop",
            Preset::Loop => "loop",
        }
    }

    pub fn spec(self, variant: Variant, inputs: &[InputKind]) -> ModelSpec {
        let (m, registers, max_list_len, asm_len, asm_steps, prefix, body, suffix) = match self {
            Preset::Straightline => (20, 3, 10, 11, 11, 0, 0, 11),
            Preset::SimpleLoop => (20, 4, 5, 6, 4 * 5 + 2, 0, 2, 0),
            Preset::Loop => (32, 3, 5, 6, 1 + 4 * 5 + 2, 1, 3, 2),
        };
        let assembly = variant.is_assembly();
        ModelSpec {
            variant,
            m,
            registers,
            program_len: if assembly { asm_len } else { 0 },
            timesteps: if assembly { asm_steps } else { 0 },
            prefix: if assembly { 0 } else { prefix },
            body: if assembly { 0 } else { body },
            suffix: if assembly { 0 } else { suffix },
            max_list_len,
            combinators: if variant.has_combinators() && body > 0 {
                Combinator::ALL.to_vec()
            } else {
                vec![]
            },
            inputs: inputs.to_vec(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s || p.name().replace('-', "") == s.replace(['-', '_'], ""))
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}
