//! Solves the steady-state (regulator) equations of nonlinear output
//! regulation by training a small fully connected network against
//! physics-informed residual losses, instantiated on a helicopter
//! vertical-tracking benchmark: the network maps exosystem states to the
//! steady attitude angles and lateral tilt, and a closed-loop simulator
//! validates tracking of a harmonically oscillating vertical reference.

pub mod autodiff;
pub mod config;
pub mod heli;
pub mod net;
pub mod regeq;
pub mod sim;
pub mod train;
pub(crate) mod util;

pub use config::RunConfig;
pub use heli::{ControlInputs, HeliParams, RigidState};
pub use net::{LieBundle, MlpParams, NetOutput};
pub use regeq::{ExoConfig, ExoState, ResidualBreakdown, SteadyMaps};
pub use sim::{Gains, SimOptions, SimResult};
pub use train::{SamplePoint, TrainConfig};
