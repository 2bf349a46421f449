//! Observables computed from states and trajectories.

pub mod loschmidt;
pub mod qfunc;
pub mod spin;
pub mod squeezing;
pub mod sweep;
pub mod trajectory;

pub use loschmidt::{loschmidt_diagnostics, LoschmidtDiagnostics};
pub use qfunc::{q_function, QField, QMesh};
pub use spin::{magnetization, per_qubit_z, spin_moments, Axis, SpinMoments};
pub use squeezing::{mean_spin_direction, squeezing_parameter, SqueezingFrame};
pub use sweep::{perimeter_law_fit, squeezing_sweep};
pub use trajectory::{averaged_czz, order_parameter, run_trajectory, TrajectoryRecord};
