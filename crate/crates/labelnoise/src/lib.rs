//! Label-noise detection, balancing, and evaluation.
//!
//! This crate works with binary (and K-class) classification data whose
//! labels have passed through class- or group-dependent noise. It can
//!
//! * generate clusterable synthetic data and corrupt it under a known noise
//!   model ([`data`]),
//! * detect, using noisy labels alone, which class or group carries more
//!   noise via 2-nearest-neighbor label agreement ([`agreement`]),
//! * equalize unequal noise rates by inserting noise into the cleaner class
//!   or group ([`balance`]),
//! * train linear classifiers under noise-aware losses ([`learn`]) and
//!   measure accuracy and equalized-odds fairness ([`fairness`]), and
//! * run seeded end-to-end experiments that emit CSV and text reports
//!   ([`experiment`]).
//!
//! The guiding idea: when one class is noisier than the other, many noise-
//! robust methods degrade, and deliberately *adding* noise to the cleaner
//! side — trading a little signal for symmetry — often helps downstream
//! accuracy and fairness. The [`balance`] module implements that trade.

pub mod agreement;
pub mod balance;
pub mod data;
pub mod error;
pub mod neighbors;
mod rng;

pub use error::{Error, Result};
