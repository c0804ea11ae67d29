//! Safety certification of feed-forward neural networks by abstracting
//! activations and input sets with quadratic constraints and solving the
//! resulting semidefinite programs.

pub mod activation_qc;
pub mod error;
pub mod exec;
pub mod input_qc;
pub mod io;
pub mod lmi;
pub mod network;
pub mod oracle;
pub mod param;
pub mod presolve;
pub mod sdp;
pub mod verifier;

pub use error::{Error, Result};
