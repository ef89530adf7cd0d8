//! Dynamic cardiac cine reconstruction toolkit: synthetic multi-coil cine
//! phantoms, variable-density Cartesian undersampling, a compressed-sensing
//! ADMM baseline and an unrolled residual convolutional-recurrent network,
//! with shared image-quality metrics and a bit-exact tensor file format.

pub mod admm;
pub mod autodiff;
pub mod cg;
pub mod checkpoint;
pub mod config;
pub mod crnn;
pub mod dataset;
pub mod error;
pub mod fft;
pub mod io;
pub mod metrics;
pub mod montage;
pub mod phantom;
pub mod sampling;
pub mod sense;
pub mod tensor;
pub mod train;
pub mod transforms;

pub use error::{Error, Result};
