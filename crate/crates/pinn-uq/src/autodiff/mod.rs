//! Taped scalar computation engine: jet propagation for input-derivatives
//! of network outputs, and reverse-mode gradients of any recorded scalar
//! with respect to all parameter leaves.

pub mod fd;
pub mod jet;
pub mod tape;

pub use fd::{central_diff_grad, fd_check};
pub use jet::{
    forward_jet, forward_jet_masked, forward_jet_taped, forward_jet_taped_masked, forward_taped,
    Jet, JetNodes,
};
pub use tape::{NodeId, OpKind, Tape};
