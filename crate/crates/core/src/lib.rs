//! Spectral simulation toolkit for stochastic nonlocal reaction-diffusion
//! equations with fading memory: memory kernels and their integrated-history
//! representation, exact Ornstein-Uhlenbeck and colored noise, a
//! history-ledger time integrator for the transformed system, and
//! pullback-attractor experiments with Hausdorff semidistance diagnostics.

// Fused quadrature loops index several mode-aligned arrays in lockstep.
#![allow(clippy::needless_range_loop)]

pub mod attractor;
pub mod checks;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod io;
pub mod kernel;
pub mod noise;
pub mod quad;
pub mod spectral;

pub use error::{CoreError, Result};
pub use field::Field;
pub use kernel::{
    HistorySegment, IntegratedHistory, KernelFamily, MemoryKernel, PhaseSpaceParams,
};
pub use spectral::{
    DiffusionKind, DiffusionSpec, NonlinearPlan, NonlinearitySpec, SpectralBasis,
};
pub use noise::{kernel_noise_convolution, ColoredPath, NoisePath};
pub use dynamics::{
    cocycle_xi, evolve_psi, CocycleState, Driver, EnergyConstants, EnergyDiagnostics, EnergyRow,
    HistoryLedger, Integrator, NoiseMode, PsiRun, ScalarSeries, SystemSpec, XiRun,
};
pub use attractor::{
    absorbing_radius_sq, hausdorff_semidist, invariance_defect, pullback_cloud,
    resample_segment, sample_ensemble, temperedness_samples, usc_experiment, wz_solution_gap,
    CloudPoint, CloudX, EnsembleConfig, UscReport, WzGapRow,
};
pub use checks::CheckOutcome;
pub use noise::ou_step_law;
