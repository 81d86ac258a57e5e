//! Concrete program inputs and outputs.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Scalar,
    List,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Scalar,
    Bool,
    List,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Input {
    Scalar(usize),
    List(Vec<usize>),
}

impl Input {
    pub fn kind(&self) -> InputKind {
        match self {
            Input::Scalar(_) => InputKind::Scalar,
            Input::List(_) => InputKind::List,
        }
    }
}

/// A decoded program result. Booleans are encoded as 0/1 scalars.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Output {
    Scalar(usize),
    List(Vec<usize>),
}

impl Output {
    pub fn bool(b: bool) -> Self {
        Output::Scalar(b as usize)
    }
}

/// One input/output pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub inputs: Vec<Input>,
    pub output: Output,
}

impl Example {
    pub fn new(inputs: Vec<Input>, output: Output) -> Self {
        Example { inputs, output }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, xs: &[usize]) -> fmt::Result {
    write!(f, "[")?;
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{x}")?;
    }
    write!(f, "]")
}

impl fmt::Display for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Input::Scalar(v) => write!(f, "{v}"),
            Input::List(xs) => write_list(f, xs),
        }
    }
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Output::Scalar(v) => write!(f, "{v}"),
            Output::List(xs) => write_list(f, xs),
        }
    }
}
