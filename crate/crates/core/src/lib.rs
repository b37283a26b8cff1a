//! Simulator, experiment protocol and trajectory analysis for a two-handle
//! board and ball balancing task.
//!
//! The board is driven at two control points through spring-damper
//! couplings to a pair of styluses (one per hand, or one per partner), is
//! tethered to the origin by a vertical spring, and carries a ball that
//! rolls along its long axis. The crate is organized bottom-up:
//!
//! * [`params`] and [`dynamics`]: the equations of motion and a fixed-step
//!   integrator.
//! * [`protocol`]: trial lifecycle, block schedule and the tick-level
//!   [`protocol::BlockRunner`] that ties simulation and protocol together.
//! * [`logs`]: JSON-lines block logs and summary CSVs.
//! * [`sigproc`]: Butterworth design and zero-phase filtering.
//! * [`analysis`]: per-trial metrics and group statistics.
//! * [`agents`]: scripted controllers for headless experiments.
//! * [`session`]: transport-agnostic interactive session logic.
//! * [`report`]: aggregate tables over analysis outputs.

pub mod agents;
pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod logs;
pub mod params;
pub mod protocol;
pub mod report;
pub mod session;
pub mod sigproc;

pub use dynamics::{ForcePair, Side, SimState, StylusInput};
pub use error::{Error, Result};
pub use params::{RollSign, SimParams};
