//! G²HFNet: salient object detection with pyramid attention, multi-scale
//! detail enhancement, dual-branch geometry/granularity complementation and
//! local-global guidance fusion, on a small reverse-mode autodiff core.

pub mod attention;
pub mod cli;
pub mod dgc;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod image;
pub mod mde;
pub mod net;
pub mod objective;
pub mod oracle;
pub mod ops;
pub mod params;
pub mod rng;
pub mod selftest;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod weights;

pub use net::{init_weights, Backbone, G2hfNet, NetConfig, SaliencyOutputs, ToyEncoder};
pub use error::{Error, ImageError, Result, WeightError};
pub use params::{ConvParams, Module};
pub use rng::Rng;
pub use tape::{Fault, Gradients, Tape, Var};
pub use tensor::Tensor;
pub use weights::ModelWeights;
