pub mod ambiguity;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dsa;
pub mod env;
pub mod error;
pub mod nn;
pub mod rl;
pub mod seeding;
pub mod trainer;

pub use error::{Error, Result};
