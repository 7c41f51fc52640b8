//! flowpl-core: optical flow training with iterative pseudo labeling.
//!
//! The crate is `no_std` (with `alloc`) and holds everything that is pure
//! computation: the differentiation tape, flow metrics and codecs, the
//! procedural scene generator, the correlation-volume flow network, the
//! losses, the optimization loop and the pseudo-labeling driver. File
//! formats on disk, run directories and the command line live in the
//! `flowpl` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod audit;
pub mod error;
pub mod flow;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod real;
pub mod seed;
pub mod ssl;
pub mod synth;
pub mod tape;
pub mod train;
pub mod tensor;

pub use error::{Error, FlowError, Result, SynthError, TensorError};
pub use real::Real;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
