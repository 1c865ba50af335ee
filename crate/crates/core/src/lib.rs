//! Simulation toolkit for an n-qubit spin chain run as a four-stroke quantum
//! heat engine: stroke pipeline, limit-cycle solvers, thermodynamic reporting
//! and time reversal of the cycle channels.

pub mod chain;
pub mod cli;
pub mod engine;
pub mod error;
pub mod limitcycle;
pub mod linalg;
pub mod random;
pub mod report;
pub mod reversal;
pub mod thermo;

pub use chain::{build_hamiltonian, ChainSpec, HamiltonianParts};
pub use engine::{run_cycle, simulate, Cycle, CycleParams, CycleRecord, CycleState};
pub use error::{Error, Result};
pub use limitcycle::{
    channel_matrix, fixed_point_iterate, fixed_point_spectral, limit_cycle_states, make_phi_ac,
    make_phi_cb, Channel, ChannelMatrix, FixedPointResult,
};
pub use linalg::{partial_trace, trace_distance, ComplexMatrix, DensityMatrix};
pub use reversal::{choi_matrix, kraus_from_choi, reverse_channel, KrausSet, ReversedChannel};
pub use thermo::{ansatz_state, limit_cycle_report, LimitCycleReport};
