//! Proxy-based machine unlearning via closed-form logit shifts.

pub mod datagen;
pub mod error;
pub mod eval;
pub mod io;
mod linalg;
pub mod model;
pub mod nets;
pub mod numkit;
pub mod proxies;
pub mod unlearn;

pub use error::{Error, Result};
