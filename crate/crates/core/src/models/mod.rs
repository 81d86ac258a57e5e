//! Model variants, their parameter layouts and the unrolled execution.

mod layout;
mod params;
mod run;
mod spec;

pub use layout::{
    Block, Choice, ClosureVar, Layout, LineRef, LineSlots, LoopSlots, RegRole, Slot, SlotKind,
};
pub use params::{ParamSet, POINT_MASS_GAP};
pub use run::{build_run, initial_state, line_kinds, run_model, run_model_output, ProgramNodes, Run};
pub use spec::{Combinator, ModelSpec, Preset, Variant, IMMUTABLE_INITIAL_REGS};
