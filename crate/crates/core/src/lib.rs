//! Analysis co-sparse coding for non-intrusive load monitoring.
//!
//! Per-appliance analysis dictionaries are learned from submetered day
//! matrices with Split Bregman iterations ([`analysis`]), then used to split
//! an aggregate meter reading into appliance estimates ([`disagg`]). A
//! nonnegative synthesis sparse-coding baseline ([`synthesis`]), the data
//! pipeline ([`datapipe`]) and evaluation metrics ([`metrics`]) complete the
//! toolkit.

pub mod analysis;
pub mod artifacts;
pub mod datapipe;
pub mod disagg;
pub mod error;
pub mod metrics;
pub mod numkernels;
pub mod synthesis;

pub use error::{Error, Result};
