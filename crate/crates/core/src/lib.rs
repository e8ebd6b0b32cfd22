//! Discrete-event simulator for a hierarchical video-on-demand system: a
//! main server, a ring of trackers, a ring of proxies under each tracker and
//! clients under each proxy, with popularity-based prefix caching and client
//! chaining.

pub mod catalog;
pub mod chaining;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod placement;
pub mod routing;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
