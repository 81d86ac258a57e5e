//! Concrete programs, their exact interpreter and an enumerative search
//! baseline.

mod enumerate;
mod interp;
mod pretty;
mod program;

pub use enumerate::{enumerate, Budget, SearchOutcome};
pub use interp::{execute, initial_state, run_program, ConcreteState, Execution, Reg};
pub use pretty::{dead_code, pretty, render};
pub use program::{ConcreteProgram, DLine, DLoop, Decoded};
