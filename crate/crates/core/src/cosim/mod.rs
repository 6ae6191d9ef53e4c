//! Closed-loop co-simulation of a window model with a single-zone thermal
//! and CO2 model, plus a line protocol for external simulators.

mod features;
mod protocol;
mod run;
mod zone;

pub use features::FeatureAssembler;
pub use protocol::{serve_stream, serve_tcp, ProtocolSession};
pub use run::{
    fit_report, run_cosim, write_trajectory_csv, BoundarySeries, CosimRun, FitReport, FnPolicy, ModelPolicy,
    TrajectoryPoint, WindowPolicy,
};
pub use zone::{thermal_coefficients, zone_step, Boundary, ZoneParams, ZoneState, RHO_CP_AIR};
