pub mod circuit;
pub mod error;
pub mod fock;
pub mod noise;
pub mod objective;
pub mod optim;
pub mod search;
pub mod targets;
pub mod wigner;

pub use error::{Error, Result};
