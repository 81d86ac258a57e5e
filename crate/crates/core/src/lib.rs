//! Learning list-manipulating programs from input/output examples by
//! gradient descent through differentiable interpreters.
//!
//! Seven interpreter variants are provided, from an assembly machine with
//! jumps and a stack-allocated heap up to a typed functional language with
//! immutable registers and `foldli`/`mapi`/`zipWithi` combinators. Each comes
//! with an exact discrete counterpart used to check learned programs and to
//! drive an enumerative search baseline.

pub mod autodiff;
pub mod discrete;
pub mod error;
pub mod machine;
pub mod models;
pub mod observe;
pub mod tasks;
pub mod train;
pub mod value;

pub use error::{Error, Result};
