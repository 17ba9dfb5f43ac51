//! On-disk formats: DRT1 tensors, model checkpoints, PGM images.

pub mod checkpoint;
pub mod drt1;
pub mod pgm;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Manifest};
pub use drt1::{read_tensor, write_tensor, Tensor};
pub use pgm::{read_pgm, write_pgm, GrayImage};
