//! Shift-equivariant complex-valued polyphase sampling.

pub mod autodiff;
pub mod ctensor;
pub mod dataio;
pub mod harness;
pub mod cvnn;
pub mod polsar;
pub mod polyphase;
pub mod select;
