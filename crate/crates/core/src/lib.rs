//! Zero-stealthy actuator attacks on multirate sampled-data LTI systems.
//!
//! The crate lifts the continuous-time plant over one sensing/actuation
//! cluster, decides whether the input redundancy needed for a sampled-output
//! invisible attack exists, synthesizes the attack hold sequence off-line and
//! checks it against an exact continuous-time simulation.
//!
//! ```
//! use zerostealth::scenario::Scenario;
//!
//! let scenario = Scenario::demo("three-state").unwrap();
//! let run = scenario.run().unwrap();
//! assert!(run.report.feasible());
//! assert!(run.verification.unwrap().passed());
//! ```

pub mod analyzer;
pub mod attack;
pub mod error;
pub mod lifting;
pub mod numlin;
pub mod plant;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
