//! A small reverse-mode automatic differentiation engine for convolutional
//! networks on the CPU.
//!
//! Values live in [`Tensor`]s; a [`Tape`] records operations on [`Var`]
//! handles and replays them backwards. Convolutions are lowered to
//! `im2col` plus a single matrix product, which keeps single-core training of
//! small image models practical.
//!
//! ```
//! use defilter_nn::{Tape, Tensor};
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.leaf(Tensor::new(&[3], vec![1.0, -2.0, 3.0]).unwrap());
//! let loss = x.sqr().sum_all();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 6.0]);
//! ```

mod error;
mod float;
mod fpenv;
pub mod gradcheck;
pub mod init;
pub mod layers;
mod ops;
mod optim;
mod params;
mod tape;
mod tensor;

pub use error::{NnError, Result};
pub use float::Float;
pub use fpenv::with_flush_to_zero;
pub use ops::conv::ConvOptions;
pub use ops::elementwise::sigmoid;
pub use ops::loss::smooth_l1;
pub use ops::spatial::Axis;
pub use optim::Adam;
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;
