use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Slot types of typed registers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValueType {
    Int,
    Ptr,
    Bool,
}

impl ValueType {
    pub const ALL: [ValueType; 3] = [ValueType::Int, ValueType::Ptr, ValueType::Bool];

    /// Position of this slot inside a typed register.
    pub fn slot(self) -> usize {
        match self {
            ValueType::Int => 0,
            ValueType::Ptr => 1,
            ValueType::Bool => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InstrKind {
    Cons,
    Head,
    Tail,
    Add,
    Inc,
    Dec,
    Eq,
    Gt,
    And,
    Or,
    Zero,
    One,
    Noop,
    Jz,
    Jnz,
    Return,
    Ite,
}

/// What an instruction produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Produces {
    Value(ValueType),
    /// Copies a whole register (all slots) from one of its arguments.
    Copy,
    Control,
    Nothing,
}

use InstrKind::*;

impl InstrKind {
    pub const ALL: [InstrKind; 17] = [
        Cons, Head, Tail, Add, Inc, Dec, Eq, Gt, And, Or, Zero, One, Noop, Jz, Jnz, Return, Ite,
    ];

    /// Instruction set of the assembly variants.
    pub const ASSEMBLY: [InstrKind; 16] = [
        Cons, Head, Tail, Add, Inc, Dec, Eq, Gt, And, Or, Zero, One, Noop, Jz, Jnz, Return,
    ];

    /// Instruction set of the variants with structured control flow.
    pub const STRUCTURED: [InstrKind; 14] = [
        Cons, Head, Tail, Add, Inc, Dec, Eq, Gt, And, Or, Zero, One, Noop, Ite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Cons => "cons",
            Head => "head",
            Tail => "tail",
            Add => "add",
            Inc => "inc",
            Dec => "dec",
            Eq => "eq",
            Gt => "gt",
            And => "and",
            Or => "or",
            Zero => "zero",
            One => "one",
            Noop => "noop",
            Jz => "jz",
            Jnz => "jnz",
            Return => "return",
            Ite => "ite",
        }
    }

    /// Number of register arguments, not counting the condition of `ite`
    /// or the branch target of jumps.
    pub fn arity(self) -> usize {
        match self {
            Cons | Add | Eq | Gt | And | Or | Ite => 2,
            Head | Tail | Inc | Dec | Jz | Jnz | Return => 1,
            Zero | One | Noop => 0,
        }
    }

    /// Slot each argument is read from in typed registers; `None` means the
    /// whole register.
    pub fn arg_types(self) -> &'static [Option<ValueType>] {
        const I: Option<ValueType> = Some(ValueType::Int);
        const P: Option<ValueType> = Some(ValueType::Ptr);
        const B: Option<ValueType> = Some(ValueType::Bool);
        match self {
            Cons => &[I, P],
            Head | Tail => &[P],
            Add | Eq | Gt => &[I, I],
            Inc | Dec => &[I],
            And | Or => &[B, B],
            Ite => &[None, None],
            Jz | Jnz | Return => &[None],
            Zero | One | Noop => &[],
        }
    }

    pub fn produces(self) -> Produces {
        match self {
            Cons | Tail => Produces::Value(ValueType::Ptr),
            Head | Add | Inc | Dec | Zero | One => Produces::Value(ValueType::Int),
            Eq | Gt | And | Or => Produces::Value(ValueType::Bool),
            Ite => Produces::Copy,
            Jz | Jnz | Return => Produces::Control,
            Noop => Produces::Nothing,
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Add | Eq | And | Or)
    }
}

impl fmt::Display for InstrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InstrKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InstrKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown instruction `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arg_types_match_arity() {
        for k in InstrKind::ALL {
            if k.produces() != Produces::Control {
                assert_eq!(k.arg_types().len(), k.arity(), "{k}");
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for k in InstrKind::ALL {
            assert_eq!(k.name().parse::<InstrKind>().unwrap(), k);
        }
        assert!("jmp".parse::<InstrKind>().is_err());
    }

    #[test]
    fn sets_are_disjoint_where_expected() {
        assert!(!InstrKind::ASSEMBLY.contains(&Ite));
        assert!(!InstrKind::STRUCTURED.contains(&Jz));
        assert!(!InstrKind::STRUCTURED.contains(&Return));
    }
}
