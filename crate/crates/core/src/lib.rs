pub mod abic;
pub mod ci;
pub mod data;
pub mod error;
pub mod fci;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod posterior;
pub mod ricf;
pub mod rng;
pub mod scm;
pub mod spot;

pub use error::{Error, Result};
