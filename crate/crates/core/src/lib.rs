//! Perception- and energy-aware trajectory planning for a UAV flying over a
//! 2-D map of SLAM feature points.
//!
//! The planner grows a tree of spline-smoothed segments. Each segment's cruise
//! speed is picked to minimize a weighted sum of flight energy and a perception
//! cost derived from the Fisher information of range measurements whose noise
//! depends on speed.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod geometry;
pub mod interp;
pub mod output;
pub mod perception;
pub mod planner;
pub mod replan;
pub mod scenario;
pub mod spline;
pub mod types;
pub mod uncertainty;

pub use error::{Error, Result};
pub use types::*;
