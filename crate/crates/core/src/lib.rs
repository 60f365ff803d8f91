//! Simulation and analysis of opportunistic QKD on classical WDM links.
//!
//! Classical traffic on an `N`-channel link follows a diurnal trend with
//! lognormal long-range-dependent noise ([`traffic`], [`fgn`]). Channels
//! left idle by the classical load, minus a guard band, carry QKD
//! ([`wdm`]). Generated keys feed a buffer that alternates between serving
//! and recharging ([`buffer`]), and [`fpt`] studies the time to its first
//! depletion.
//!
//! Everything stochastic is a pure function of explicit `u64` seeds;
//! ensembles derive per-trial seeds with [`seed::mix`].

// Guards like `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod buffer;
pub mod error;
pub mod fgn;
pub mod format;
pub mod fpt;
pub mod optim;
pub mod report;
pub mod seed;
pub mod stats;
pub mod traffic;
pub mod wdm;

pub use error::{Error, Result};
