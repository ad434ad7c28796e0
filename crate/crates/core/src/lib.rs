//! WiFi RTT ranging fused with pedestrian dead reckoning.
//!
//! Each AP's ranges along a walk with known step headings determine the AP's
//! constant range bias, the walker's step length and the walk relative to the
//! AP. Rotating the per-AP relative walks into one global frame gives the fix.

pub mod alignment;
pub mod arbitrary;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod linear;
pub mod logfile;
pub mod lsq;
pub mod pipeline;
pub mod search;
pub mod sim;
pub mod sweep;
pub mod types;

pub use error::{Error, Result};
