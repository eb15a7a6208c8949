//! Shared fixtures for the benchmark targets: a desk-scale system, a seeded
//! realization, and a warmed-up trajectory state.

use memoir_core::attractor::{sample_ensemble, CloudX, EnsembleConfig};
use memoir_core::dynamics::{CocycleState, Driver, Integrator, NoiseMode, SystemSpec};
use memoir_core::kernel::{KernelFamily, MemoryKernel, PhaseSpaceParams, DEFAULT_TAIL_TOL};
use memoir_core::spectral::{DiffusionKind, DiffusionSpec, NonlinearitySpec, SpectralBasis};
use memoir_core::{Field, HistorySegment, NoisePath};

pub const GAMMA: f64 = 0.45;

pub fn desk_spec(n: usize) -> SystemSpec {
    let kernel = MemoryKernel::new(KernelFamily::Exponential { d: 2.0, c: 2.0 }, DEFAULT_TAIL_TOL)
        .unwrap();
    let basis = SpectralBasis::new(std::f64::consts::PI, n, 4 * n).unwrap();
    let mut phi = Field::zeros(n);
    phi.coeffs[0] = 0.4;
    if n > 2 {
        phi.coeffs[2] = 0.2;
    }
    let mut forcing = Field::zeros(n);
    forcing.coeffs[0] = 1.0;
    if n > 1 {
        forcing.coeffs[1] = -0.5;
    }
    let mut ell = Field::zeros(n);
    ell.coeffs[0] = 1.0;
    SystemSpec {
        phase: PhaseSpaceParams::with_resolution(GAMMA, 0.02).unwrap(),
        diffusion: DiffusionSpec::new(DiffusionKind::Rational, 1.0, 2.0, ell).unwrap(),
        nonlinearity: NonlinearitySpec::new(2, vec![1.0, 0.0, -1.0, 0.0]).unwrap(),
        phi,
        forcing,
        kernel: Some(kernel),
        basis,
    }
}

pub fn seeded_path(spec: &SystemSpec, t_fwd: f64) -> NoisePath {
    let back = 40.0 / GAMMA + spec.kernel.as_ref().map(|k| k.s_cut).unwrap_or(0.0) + 5.0;
    NoisePath::generate(7, 1e-3, back, t_fwd, &[0.01]).unwrap()
}

pub struct Fixture {
    pub spec: SystemSpec,
    pub path: NoisePath,
    pub driver: Driver,
}

impl Fixture {
    pub fn new(n: usize, n_steps: usize, dt: f64) -> Self {
        let spec = desk_spec(n);
        let path = seeded_path(&spec, n_steps as f64 * dt + 1.0);
        let driver = Driver::new(&spec, &path, NoiseMode::WhiteOu, 0.0, n_steps, dt).unwrap();
        Fixture { spec, path, driver }
    }

    pub fn warmed_state(&self, warmup: usize) -> (Integrator<'_>, CocycleState) {
        let integrator = Integrator::new(&self.spec, &self.driver).unwrap();
        let hist = HistorySegment::zeros(&self.spec.phase, self.spec.basis.n);
        let mut state = integrator.init_state(Field::from_coeffs(vec![0.3; self.spec.basis.n]), &hist);
        integrator.evolve(&mut state, warmup, None).unwrap();
        (integrator, state)
    }
}

pub fn sample_cloud(n: usize, points: usize, seed: u64) -> CloudX {
    let phase = PhaseSpaceParams::new(GAMMA, 20.0, 401).unwrap();
    let lambdas: Vec<f64> = (1..=n).map(|j| (j * j) as f64).collect();
    let cfg = EnsembleConfig { n_points: points, n_history_perturbed: points / 8, radius: 1.5, seed };
    sample_ensemble(n, &lambdas, &phase, &cfg)
}
