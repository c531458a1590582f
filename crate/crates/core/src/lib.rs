//! Pseudorandom generators and hitting-set generators for read-once CNFs,
//! CNFs with parity terms, combinatorial rectangles and width-3 read-once
//! branching programs, with exact analytics for checking them at small scale.
//!
//! Signs: `+1` is true, `-1` is false. Variables are 0-based in code and 1-based
//! in the text formats.

pub mod approx;
pub mod bits;
pub mod bp3;
pub mod cr_prg;
pub mod error;
pub mod gf2k;
pub mod harness;
pub mod models;
pub mod rational;
pub mod rcnf_prg;
pub mod smallbias;
pub mod sympoly;

pub use bits::{IndexSet, Seed, Sign, SignVector, FALSE, TRUE};
pub use error::{Error, Result};
pub(crate) use rational::ratio_serde;
