//! Two-stage abbreviation detection and definition matching for Russian
//! scientific text.

pub mod candgen;
pub mod corpus;
pub mod detect;
pub mod error;
pub mod evalx;
pub mod identify;
pub mod matchfeat;
pub mod ml;
pub mod synth;
pub mod textprep;

pub use error::{Error, Result};
