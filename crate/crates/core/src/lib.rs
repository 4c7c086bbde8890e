//! Renewal processes, linearwise jump processes, and Monte Carlo
//! verification of their long-run laws.
//!
//! The crate is organised around four layers:
//!
//! | module       | contents                                                        |
//! |--------------|-----------------------------------------------------------------|
//! | [`dist`]     | positive sojourn laws, their moments, tails, and support checks |
//! | [`renewal`]  | renewal trajectories, the renewal function, overjump laws       |
//! | [`linearwise`] | finite-state jump processes with an elapsed-time component    |
//! | [`bounds`]   | closed-form moment bounds checked against simulation            |
//!
//! The companion `renewal-kit-cli` crate drives the same machinery from
//! declarative scenario files through the `renkit` binary.

pub mod bounds;
pub mod dist;
pub mod linearwise;
pub mod quad;
pub mod renewal;
pub mod rng;
pub mod stats;
