pub mod dp;
pub mod error;
pub mod eval;
pub mod hpsd;
pub mod io;
pub mod linalg;
pub mod mp;
pub mod rng;
pub mod score;
pub mod synth;
pub mod tensor;

pub use error::{Result, StpcaError};
