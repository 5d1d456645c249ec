pub mod assignment;
pub mod clir;
pub mod commands;
pub mod config;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod neighbors;
pub mod numerics;
pub mod projection;
pub mod supervised;
pub mod synthetic;
pub mod textio;
pub mod unsupervised;

pub use error::{Error, Result};
