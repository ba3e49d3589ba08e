pub mod attention;
pub mod dct;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod gcn;
pub mod kv;
pub mod model;
pub mod numerics;
pub mod pose;
pub mod selfcheck;
pub mod training;

pub use error::{Error, Result};
