//! The lifted abstract machine: value domains, instructions and their
//! differentiable semantics.

mod dist;
mod instr;
mod lift;
mod state;

pub use dist::{argmax, Dist, NORM_TOL};
pub use instr::{InstrKind, Produces, ValueType};
pub use lift::{
    Activation, Executed, LCell, LReg, LiftedHeap, LiftedState, Lifter, LineEval, LineParams,
    RegChoice, StackHeap,
};
pub use state::{encode_concrete, encode_inputs, Domains, Encoded, HeapCell, MachineState, Register};
