//! Time integration of the memory-transformed system with a history ledger.
//!
//! The auxiliary history variable is never stepped as a transport equation:
//! it is reconstructed exactly from the stored trajectory plus the initial
//! integrated history (method of characteristics), and memory integrals are
//! quadratures over that reconstruction. One step is a Strang composition of
//! a pointwise-implicit reaction half-step (L-stable backward Euler per
//! collocation point, so stiff transients from large data decay
//! monotonically), a trapezoidal predictor-corrector sweep over the linear
//! part (Crank-Nicolson diagonal diffusion solve, memory and noise forcing
//! averaged between endpoint evaluations), and the closing reaction
//! half-step. The composition is a one-step method, so a run restarted from
//! its own output continues the original trajectory to rounding accuracy;
//! on linear problems it is a clean second-order scheme.

use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::kernel::{HistorySegment, MemoryKernel, PhaseSpaceParams};
use crate::noise::{kernel_noise_convolution, NoisePath};
use crate::spectral::{DiffusionSpec, NonlinearPlan, NonlinearitySpec, SpectralBasis};

/// Everything defining one realization-independent problem.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub basis: SpectralBasis,
    pub kernel: Option<MemoryKernel>,
    pub phase: PhaseSpaceParams,
    pub diffusion: DiffusionSpec,
    pub nonlinearity: NonlinearitySpec,
    /// Noise profile (modal); finite modal sums are automatically smooth
    /// enough for every estimate used here.
    pub phi: Field,
    /// Constant forcing (modal).
    pub forcing: Field,
}

impl SystemSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.basis.n;
        if self.phi.len() != n || self.forcing.len() != n || self.diffusion.ell.len() != n {
            return Err(CoreError::InvalidParameter(
                "phi, forcing and ell must all have one coefficient per mode".into(),
            ));
        }
        let varpi = self.kernel.as_ref().map(|k| k.varpi).unwrap_or(f64::INFINITY);
        PhaseSpaceParams::validate_gamma(
            self.phase.gamma,
            self.diffusion.m,
            self.basis.lambda1(),
            varpi,
        )
    }

    /// `K_2 = 1 + 2/m`, the factor in front of the integrated energy input.
    pub fn k2(&self) -> f64 {
        1.0 + 2.0 / self.diffusion.m
    }

    /// Explicit transient constant assembled from the initial-data estimates:
    /// `K_1 = (1 + 2/m) max(1, 2 K_mu) + 1`.
    pub fn k1(&self) -> Result<f64> {
        let kmu = match &self.kernel {
            Some(k) => k.kmu_constant(self.phase.gamma)?,
            None => 0.0,
        };
        Ok((1.0 + 2.0 / self.diffusion.m) * (2.0 * kmu).max(1.0) + 1.0)
    }
}

/// Which stationary process drives the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    /// Deterministic problem: every noise term is identically zero.
    Off,
    /// White-noise transform driven by the OU process `z*`.
    WhiteOu,
    /// Wong-Zakai approximation with correlation time `delta`, driven by
    /// `y_delta`.
    Colored(f64),
}

impl NoiseMode {
    pub fn tag(&self) -> String {
        match self {
            NoiseMode::Off => "off".into(),
            NoiseMode::WhiteOu => "white".into(),
            NoiseMode::Colored(d) => format!("colored({d})"),
        }
    }
}

/// Scalar time series on a uniform grid with linear interpolation.
#[derive(Debug, Clone)]
pub struct ScalarSeries {
    pub t0: f64,
    pub h: f64,
    pub values: Vec<f64>,
}

impl ScalarSeries {
    pub fn at(&self, t: f64) -> f64 {
        let pos = (t - self.t0) / self.h;
        if pos <= 0.0 {
            return self.values[0];
        }
        let last = (self.values.len() - 1) as f64;
        if pos >= last {
            return *self.values.last().unwrap();
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// Noise values of a mode on the path grid.
pub fn noise_values(path: &NoisePath, mode: NoiseMode) -> Result<Vec<f64>> {
    Ok(match mode {
        NoiseMode::Off => vec![0.0; path.n_nodes()],
        NoiseMode::WhiteOu => path.z_star_nodes().to_vec(),
        NoiseMode::Colored(delta) => {
            let idx = path.delta_index(delta)?;
            path.colored_paths()[idx].y.clone()
        }
    })
}

/// The path functional `C_2` of the kernel-noise convolution estimate:
/// `C_2(t) = 2 (M_1 int_0^1 |z(t-s)| ds + mu(1) e^varpi / varpi
///              int_1^inf e^{-varpi s} |z(t-s)| ds)`,
/// computed in one sweep with a prefix integral and an exponential moving
/// integral.
pub fn c2_series(kernel: &MemoryKernel, path: &NoisePath, z: &[f64]) -> ScalarSeries {
    let h = path.h;
    let n = z.len();
    let mut prefix = vec![0.0; n];
    let mut ema = vec![0.0; n];
    let decay = (-kernel.varpi * h).exp();
    for i in 0..n - 1 {
        prefix[i + 1] = prefix[i] + 0.5 * h * (z[i].abs() + z[i + 1].abs());
        ema[i + 1] = decay * ema[i] + 0.5 * h * (decay * z[i].abs() + z[i + 1].abs());
    }
    let one = (1.0 / h).round() as usize;
    let lead = kernel.mu(1.0) * kernel.varpi.exp() / kernel.varpi * (-kernel.varpi).exp();
    let values = (0..n)
        .map(|i| {
            let p_lo = if i >= one { prefix[i - one] } else { prefix[0] };
            let term1 = kernel.m1 * (prefix[i] - p_lo);
            let term2 = if i >= one { lead * ema[i - one] } else { 0.0 };
            2.0 * (term1 + term2)
        })
        .collect();
    ScalarSeries { t0: path.t_start(), h, values }
}

/// Profile-dependent constants entering the energy bound.
#[derive(Debug, Clone)]
pub struct EnergyConstants {
    pub m: f64,
    pub m_up: f64,
    pub lambda1: f64,
    pub domain_len: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub c_tilde2: f64,
    pub four_p_sq: i32,
    pub f0: f64,
    pub d_const: f64,
    pub phi_v_sq: f64,
    pub phi_h_sq: f64,
    pub phi_2p: f64,
    pub h_h_sq: f64,
}

impl EnergyConstants {
    pub fn new(spec: &SystemSpec, plan: &NonlinearPlan) -> Self {
        let nl = &spec.nonlinearity;
        EnergyConstants {
            m: spec.diffusion.m,
            m_up: spec.diffusion.m_up,
            lambda1: spec.basis.lambda1(),
            domain_len: spec.basis.l,
            gamma: spec.phase.gamma,
            alpha: nl.bounds().alpha,
            c_tilde2: nl.c_tilde2(spec.basis.l),
            four_p_sq: 4 * (nl.p * nl.p) as i32,
            f0: nl.f0(),
            d_const: nl.d_const(),
            phi_v_sq: spec.phi.v_norm_sq(spec.basis.lambdas()),
            phi_h_sq: spec.phi.h_norm_sq(),
            phi_2p: plan.lp_norm_pow(&spec.phi, 2 * nl.p),
            h_h_sq: spec.forcing.h_norm_sq(),
        }
    }

    /// The random energy input rate: with `C_1 = c_tilde2 (1 + |z|^{4p^2})`,
    ///   theta_1 = 4M^2/m |z|^2 ||phi||^2 + 4/(m lambda_1) |z|^2 |phi|^2
    ///           + 2 alpha |O| + C_1 (1 + |phi|_{2p}^{2p})
    ///           + C_2^2/m ||phi||^2 + 4/(m lambda_1) |h|^2.
    pub fn theta1(&self, z: f64, c2: f64) -> f64 {
        let z2 = z * z;
        let c1 = self.c_tilde2 * (1.0 + z.abs().powi(self.four_p_sq));
        4.0 * self.m_up * self.m_up / self.m * z2 * self.phi_v_sq
            + 4.0 / (self.m * self.lambda1) * z2 * self.phi_h_sq
            + 2.0 * self.alpha * self.domain_len
            + c1 * (1.0 + self.phi_2p)
            + c2 * c2 / self.m * self.phi_v_sq
            + 4.0 / (self.m * self.lambda1) * self.h_h_sq
    }
}

/// Theta_1 along the path for a noise mode, on the path grid.
pub fn theta1_series(spec: &SystemSpec, path: &NoisePath, mode: NoiseMode) -> Result<ScalarSeries> {
    let plan = NonlinearPlan::new(&spec.basis, 2 * spec.nonlinearity.p as usize);
    let consts = EnergyConstants::new(spec, &plan);
    let z = noise_values(path, mode)?;
    let c2 = match &spec.kernel {
        Some(k) => c2_series(k, path, &z),
        None => ScalarSeries { t0: path.t_start(), h: path.h, values: vec![0.0; z.len()] },
    };
    let values = z
        .iter()
        .zip(&c2.values)
        .map(|(&zv, &cv)| consts.theta1(zv, cv))
        .collect();
    Ok(ScalarSeries { t0: path.t_start(), h: path.h, values })
}

/// Realization data shared by every trajectory of one run: noise values,
/// kernel-noise convolution, and the energy input rate, all sampled on the
/// solver's step grid.
#[derive(Debug, Clone)]
pub struct Driver {
    pub mode: NoiseMode,
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub z: Vec<f64>,
    pub conv: Vec<f64>,
    pub theta1: Vec<f64>,
}

impl Driver {
    pub fn new(
        spec: &SystemSpec,
        path: &NoisePath,
        mode: NoiseMode,
        t0: f64,
        n_steps: usize,
        dt: f64,
    ) -> Result<Self> {
        let t_end = t0 + n_steps as f64 * dt;
        if !matches!(mode, NoiseMode::Off) {
            let back = spec.kernel.as_ref().map(|k| k.s_cut).unwrap_or(0.0);
            path.require_cover(t0 - back, t_end)?;
        }
        let zvals = noise_values(path, mode)?;
        let zs = ScalarSeries { t0: path.t_start(), h: path.h, values: zvals };
        let z: Vec<f64> = (0..=n_steps).map(|k| zs.at(t0 + k as f64 * dt)).collect();
        let conv: Vec<f64> = match (&spec.kernel, mode) {
            (None, _) | (_, NoiseMode::Off) => vec![0.0; n_steps + 1],
            (Some(kernel), _) => (0..=n_steps)
                .map(|k| kernel_noise_convolution(kernel, |s| zs.at(s), t0 + k as f64 * dt))
                .collect(),
        };
        let theta = theta1_series(spec, path, mode)?;
        let theta1 = (0..=n_steps).map(|k| theta.at(t0 + k as f64 * dt)).collect();
        Ok(Driver { mode, t0, dt, n_steps, z, conv, theta1 })
    }

    /// Deterministic driver needing no path at all.
    pub fn deterministic(spec: &SystemSpec, t0: f64, n_steps: usize, dt: f64) -> Self {
        let plan = NonlinearPlan::new(&spec.basis, 2 * spec.nonlinearity.p as usize);
        let consts = EnergyConstants::new(spec, &plan);
        let theta = consts.theta1(0.0, 0.0);
        Driver {
            mode: NoiseMode::Off,
            t0,
            dt,
            n_steps,
            z: vec![0.0; n_steps + 1],
            conv: vec![0.0; n_steps + 1],
            theta1: vec![theta; n_steps + 1],
        }
    }
}

/// Initial history plus the stored solution trajectory; reconstructs the
/// integrated history and weighted norms.
#[derive(Debug, Clone)]
pub struct HistoryLedger {
    pub tau: f64,
    pub dt: f64,
    phase: PhaseSpaceParams,
    init_values: Vec<Field>,
    /// Flattened `C(r_i) = int_{r_i}^0 phi_v`, stride = mode count.
    init_cum: Vec<f64>,
    init_lv2_sq: f64,
    /// Step-end states; global step `g` lives at `states[g - dropped]`.
    states: Vec<Field>,
    /// Flattened cumulative `A(tau + g dt) = int_tau v`, same indexing,
    /// stride = mode count.
    cum: Vec<f64>,
    n_modes: usize,
    dropped: usize,
    cap: usize,
}

impl HistoryLedger {
    pub fn new(
        phase: &PhaseSpaceParams,
        history: &HistorySegment,
        lambdas: &[f64],
        v0: Field,
        tau: f64,
        dt: f64,
        cap: usize,
    ) -> Self {
        let init_cum_fields = phase.cumulative_to_zero(history);
        let n_modes = lambdas.len();
        let mut init_cum = Vec::with_capacity(init_cum_fields.len() * n_modes);
        for f in &init_cum_fields {
            init_cum.extend_from_slice(&f.coeffs);
        }
        let init_lv2_sq = phase.lv2_norm_sq(lambdas, history);
        HistoryLedger {
            tau,
            dt,
            phase: phase.clone(),
            init_values: history.values.clone(),
            init_cum,
            init_lv2_sq,
            states: vec![v0],
            cum: vec![0.0; n_modes],
            n_modes,
            dropped: 0,
            cap: cap.max(8),
        }
    }

    pub fn initial_history_norm_sq(&self) -> f64 {
        self.init_lv2_sq
    }

    pub fn step_count(&self) -> usize {
        self.dropped + self.states.len() - 1
    }

    pub fn current_t(&self) -> f64 {
        self.tau + self.step_count() as f64 * self.dt
    }

    pub fn current_v(&self) -> &Field {
        self.states.last().unwrap()
    }

    pub fn push(&mut self, v: Field) {
        let n = self.n_modes;
        let base = self.cum.len() - n;
        let prev = self.states.last().unwrap();
        for j in 0..n {
            let a = self.cum[base + j]
                + 0.5 * self.dt * (prev.coeffs[j] + v.coeffs[j]);
            self.cum.push(a);
        }
        self.states.push(v);
        // Fold in chunks: contributions older than the cap carry weights
        // below e^{-40} in both the mu- and the gamma-weighted integrals.
        if self.states.len() > self.cap + self.cap / 4 {
            let drop = self.states.len() - self.cap;
            self.states.drain(0..drop);
            self.cum.drain(0..drop * n);
            self.dropped += drop;
        }
    }

    pub fn rollback(&mut self) {
        debug_assert!(self.states.len() > 1);
        self.states.pop();
        self.cum.truncate(self.cum.len() - self.n_modes);
    }

    /// v at an arbitrary past time, linear between steps, initial history
    /// before `tau`, clamped at the fold boundary.
    pub fn v_at(&self, t: f64) -> Field {
        if t >= self.tau {
            let pos = (t - self.tau) / self.dt - self.dropped as f64;
            let last = (self.states.len() - 1) as f64;
            if pos <= 0.0 {
                return self.states[0].clone();
            }
            if pos >= last {
                return self.states.last().unwrap().clone();
            }
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let mut f = self.states[i].scaled(1.0 - frac);
            f.add_scaled(frac, &self.states[i + 1]);
            f
        } else {
            let pos = (t - self.tau - self.phase.grid.start) / self.phase.grid.step;
            let last = (self.phase.grid.n - 1) as f64;
            if pos <= 0.0 {
                return self.init_values[0].clone();
            }
            if pos >= last {
                return self.init_values.last().unwrap().clone();
            }
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let mut f = self.init_values[i].scaled(1.0 - frac);
            f.add_scaled(frac, &self.init_values[i + 1]);
            f
        }
    }

    fn a_into(&self, t: f64, out: &mut [f64]) {
        let n = self.n_modes;
        let rows = self.states.len();
        let pos = ((t - self.tau) / self.dt - self.dropped as f64).max(0.0);
        let last = (rows - 1) as f64;
        if pos >= last {
            out.copy_from_slice(&self.cum[(rows - 1) * n..rows * n]);
            return;
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let a = &self.cum[i * n..(i + 2) * n];
        for j in 0..n {
            out[j] = a[j] * (1.0 - frac) + a[n + j] * frac;
        }
    }

    fn init_cum_into(&self, r: f64, out: &mut [f64]) {
        let n = self.n_modes;
        let pos = (r - self.phase.grid.start) / self.phase.grid.step;
        if pos <= 0.0 {
            out.copy_from_slice(&self.init_cum[..n]);
            return;
        }
        let last = (self.phase.grid.n - 1) as f64;
        if pos >= last {
            let base = (self.phase.grid.n - 1) * n;
            out.copy_from_slice(&self.init_cum[base..base + n]);
            return;
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let a = &self.init_cum[i * n..(i + 2) * n];
        for j in 0..n {
            out[j] = a[j] * (1.0 - frac) + a[n + j] * frac;
        }
    }

    /// Reconstructed integrated history at internal age `s`, evaluated at the
    /// current time: `eta(s) = A(t) - A(t - s)` for `s <= t - tau`, and
    /// `eta_0(s - (t - tau)) + A(t) - A(tau)` beyond (both branches agree at
    /// the junction).
    pub fn eta_at(&self, s: f64) -> Field {
        let n = self.n_modes;
        let t = self.current_t();
        let mut out = vec![0.0; n];
        let a_end = self.cum[(self.states.len() - 1) * n..].to_vec();
        let a_end = &a_end;
        if s <= t - self.tau {
            self.a_into(t - s, &mut out);
            let mut f = Field::zeros(n);
            for j in 0..n {
                f.coeffs[j] = a_end[j] - out[j];
            }
            f
        } else {
            self.init_cum_into(-(s - (t - self.tau)), &mut out);
            let mut f = Field::zeros(n);
            for j in 0..n {
                f.coeffs[j] = out[j] + a_end[j];
            }
            f
        }
    }

    /// Memory term and (optionally) the mu-weighted history norm in one pass
    /// over the kernel grid: returns `(-lambda_j int mu eta_j ds, ||eta||^2)`.
    pub fn memory_and_norm(
        &self,
        kernel: &MemoryKernel,
        lambdas: &[f64],
        want_norm: bool,
    ) -> (Field, f64) {
        let n = lambdas.len();
        let t = self.current_t();
        let reach = t - self.tau;
        let a_end: Vec<f64> = self.cum[(self.states.len() - 1) * n..].to_vec();
        let mut mem = vec![0.0; n];
        let mut norm = 0.0;
        let mut scratch = vec![0.0; n];
        for ((&s, &w), &mu) in kernel
            .grid
            .nodes
            .iter()
            .zip(&kernel.grid.weights)
            .zip(kernel.mu_at_nodes())
        {
            let wm = w * mu;
            if s <= reach {
                self.a_into(t - s, &mut scratch);
                if want_norm {
                    let mut vsq = 0.0;
                    for j in 0..n {
                        let e = a_end[j] - scratch[j];
                        mem[j] += wm * e;
                        vsq += lambdas[j] * e * e;
                    }
                    norm += wm * vsq;
                } else {
                    for j in 0..n {
                        mem[j] += wm * (a_end[j] - scratch[j]);
                    }
                }
            } else {
                self.init_cum_into(-(s - reach), &mut scratch);
                if want_norm {
                    let mut vsq = 0.0;
                    for j in 0..n {
                        let e = scratch[j] + a_end[j];
                        mem[j] += wm * e;
                        vsq += lambdas[j] * e * e;
                    }
                    norm += wm * vsq;
                } else {
                    for j in 0..n {
                        mem[j] += wm * (scratch[j] + a_end[j]);
                    }
                }
            }
        }
        let mut out = Field::zeros(n);
        for j in 0..n {
            out.coeffs[j] = -lambdas[j] * mem[j];
        }
        (out, norm)
    }

    /// Weighted history norm of the trajectory at the current time, split as
    /// stored part plus `e^{-gamma (t - tau)}` times the initial norm.
    pub fn history_norm_sq(&self, lambdas: &[f64]) -> f64 {
        let t = self.current_t();
        let gamma = self.phase.gamma;
        let mut stored = 0.0;
        let k_now = self.step_count();
        for (loc, v) in self.states.iter().enumerate() {
            let g = self.dropped + loc;
            let ts = self.tau + g as f64 * self.dt;
            let mut w = self.dt;
            if g == 0 || g == k_now {
                w *= 0.5;
            }
            stored += w * (gamma * (ts - t)).exp() * v.v_norm_sq(lambdas);
        }
        stored + (-gamma * (t - self.tau)).exp() * self.init_lv2_sq
    }

    /// History segment `s -> v(t + s)` sampled on an output phase grid.
    pub fn segment_on(&self, phase_out: &PhaseSpaceParams) -> HistorySegment {
        let t = self.current_t();
        HistorySegment {
            values: phase_out.grid.nodes().map(|r| self.v_at(t + r)).collect(),
        }
    }
}

/// One trajectory of the transformed system.
#[derive(Debug, Clone)]
pub struct CocycleState {
    pub ledger: HistoryLedger,
}

impl CocycleState {
    pub fn v(&self) -> &Field {
        self.ledger.current_v()
    }

    pub fn t(&self) -> f64 {
        self.ledger.current_t()
    }
}

/// Per-step record of the energy functionals and the discrete residual of
/// the dissipation inequality.
#[derive(Debug, Clone)]
pub struct EnergyRow {
    pub t: f64,
    pub h_norm_sq: f64,
    pub v_norm_sq: f64,
    pub eta_norm_sq: f64,
    pub lp_pow: f64,
    pub theta1: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EnergyDiagnostics {
    pub rows: Vec<EnergyRow>,
}

impl EnergyDiagnostics {
    pub fn max_positive_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual.max(0.0)).fold(0.0, f64::max)
    }
}

/// The integrator: owns the sampling plan and drives states through shared
/// realization data.
pub struct Integrator<'a> {
    pub spec: &'a SystemSpec,
    pub driver: &'a Driver,
    plan: NonlinearPlan,
    consts: EnergyConstants,
    phi_samples: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(spec: &'a SystemSpec, driver: &'a Driver) -> Result<Self> {
        Self::with_degree(spec, driver, 2 * spec.nonlinearity.p as usize)
    }

    /// Integrator with a lighter sampling plan. Degree `2p - 1` keeps the
    /// reaction projection exact but aliases the `L^{2p}` diagnostics, so it
    /// suits runs that never record energy rows.
    pub fn with_degree(spec: &'a SystemSpec, driver: &'a Driver, degree: usize) -> Result<Self> {
        spec.validate()?;
        let plan = NonlinearPlan::new(&spec.basis, degree);
        let consts = EnergyConstants::new(spec, &plan);
        let phi_samples = plan.sample(&spec.phi);
        Ok(Integrator { spec, driver, plan, consts, phi_samples })
    }

    pub fn plan(&self) -> &NonlinearPlan {
        &self.plan
    }

    pub fn constants(&self) -> &EnergyConstants {
        &self.consts
    }

    fn ledger_cap(&self) -> usize {
        let varpi = self.spec.kernel.as_ref().map(|k| k.varpi).unwrap_or(f64::INFINITY);
        let span = 40.0 / self.spec.phase.gamma.min(varpi);
        (span / self.driver.dt).ceil() as usize + 2
    }

    pub fn init_state(&self, v0: Field, history: &HistorySegment) -> CocycleState {
        let ledger = HistoryLedger::new(
            &self.spec.phase,
            history,
            self.spec.basis.lambdas(),
            v0,
            self.driver.t0,
            self.driver.dt,
            self.ledger_cap(),
        );
        CocycleState { ledger }
    }

    /// Backward-Euler reaction half-flow `w' = -f(w + phi z)` over `dt/2`,
    /// pointwise on the sampling grid; L-stable, so arbitrarily stiff decays
    /// are damped monotonically.
    fn reaction_half(&self, v: &Field, z: f64) -> Field {
        let nl = &self.spec.nonlinearity;
        if nl.is_zero() {
            return v.clone();
        }
        let h = 0.5 * self.driver.dt;
        let mut samples = self.plan.sample(v);
        for (s, &phi) in samples.iter_mut().zip(&self.phi_samples) {
            let c = phi * z;
            let s0 = *s;
            let mut w = s0;
            for _ in 0..100 {
                let g = w - s0 + h * nl.eval_scalar(w + c);
                let gp = 1.0 + h * nl.eval_deriv(w + c);
                let delta = g / gp;
                w -= delta;
                if delta.abs() <= 1e-14 * (1.0 + w.abs()) {
                    break;
                }
            }
            *s = w;
        }
        self.plan.project(&samples)
    }

    /// Explicit terms at time index `k` with current trajectory state `v`:
    /// `-a z lambda phi - lambda M - f... (reaction lives elsewhere)
    ///  + h + phi z - lambda phi K`.
    fn explicit_terms(&self, state: &CocycleState, v: &Field, k: usize) -> (Field, f64) {
        let spec = self.spec;
        let n = spec.basis.n;
        let lambdas = spec.basis.lambdas();
        let z = self.driver.z[k];
        let conv = self.driver.conv[k];
        let a = spec.diffusion.coeff(v, z, &spec.phi);
        let mem = match &spec.kernel {
            Some(kernel) => state.ledger.memory_and_norm(kernel, lambdas, false).0,
            None => Field::zeros(n),
        };
        let mut e = mem;
        for j in 0..n {
            e.coeffs[j] += -a * z * lambdas[j] * spec.phi.coeffs[j]
                + spec.forcing.coeffs[j]
                + spec.phi.coeffs[j] * z
                - lambdas[j] * spec.phi.coeffs[j] * conv;
        }
        (e, a)
    }

    /// Advances the state by one step.
    pub fn step(&self, state: &mut CocycleState) -> Result<()> {
        let dt = self.driver.dt;
        let lambdas = self.spec.basis.lambdas();
        let n = lambdas.len();
        let k = state.ledger.step_count();
        if k >= self.driver.n_steps {
            return Err(CoreError::InvalidParameter(
                "driver does not cover another step".into(),
            ));
        }
        let z_k = self.driver.z[k];
        let z_k1 = self.driver.z[k + 1];

        let v_star = self.reaction_half(state.ledger.current_v(), z_k);
        let (e_k, a_k) = self.explicit_terms(state, &v_star, k);

        // Predict with a semi-implicit Euler step, evaluate the explicit
        // terms at the predicted endpoint, then apply the trapezoidal
        // corrector with the averaged frozen coefficient.
        let mut pred = Field::zeros(n);
        for j in 0..n {
            pred.coeffs[j] =
                (v_star.coeffs[j] + dt * e_k.coeffs[j]) / (1.0 + dt * a_k * lambdas[j]);
        }
        state.ledger.push(pred.clone());
        let (e_pred, a_pred) = self.explicit_terms(state, &pred, k + 1);
        state.ledger.rollback();
        let a_bar = 0.5 * (a_k + a_pred);
        let mut v_mid = Field::zeros(n);
        for j in 0..n {
            let rhs = (1.0 - 0.5 * dt * a_bar * lambdas[j]) * v_star.coeffs[j]
                + 0.5 * dt * (e_k.coeffs[j] + e_pred.coeffs[j]);
            v_mid.coeffs[j] = rhs / (1.0 + 0.5 * dt * a_bar * lambdas[j]);
        }

        let v_new = self.reaction_half(&v_mid, z_k1);
        let nsq = v_new.h_norm_sq();
        if !nsq.is_finite() || nsq > 1e24 {
            return Err(CoreError::Diverged(format!(
                "|v|^2 = {nsq} at t = {}",
                state.t() + dt
            )));
        }
        state.ledger.push(v_new);
        Ok(())
    }

    fn energy_parts(&self, state: &CocycleState) -> (f64, f64, f64, f64) {
        let lambdas = self.spec.basis.lambdas();
        let v = state.ledger.current_v();
        let h_sq = v.h_norm_sq();
        let v_sq = v.v_norm_sq(lambdas);
        let eta_sq = match &self.spec.kernel {
            Some(kernel) => state.ledger.memory_and_norm(kernel, lambdas, true).1,
            None => 0.0,
        };
        let lp = self.plan.lp_norm_pow(v, 2 * self.spec.nonlinearity.p);
        (h_sq, v_sq, eta_sq, lp)
    }

    /// Advances `n_steps`, optionally recording energy diagnostics with the
    /// per-step residual of
    /// `d/dt E + gamma E + (m/2)||v||^2 + f0/(2D) |v|_{2p}^{2p} <= theta_1`.
    pub fn evolve(
        &self,
        state: &mut CocycleState,
        n_steps: usize,
        mut diag: Option<&mut EnergyDiagnostics>,
    ) -> Result<()> {
        let mut prev_energy = if diag.is_some() {
            let (h_sq, _, eta_sq, _) = self.energy_parts(state);
            h_sq + eta_sq
        } else {
            0.0
        };
        for _ in 0..n_steps {
            self.step(state)?;
            if let Some(d) = diag.as_deref_mut() {
                let (h_sq, v_sq, eta_sq, lp) = self.energy_parts(state);
                let energy = h_sq + eta_sq;
                let k = state.ledger.step_count();
                let theta = self.driver.theta1[k];
                let residual = (energy - prev_energy) / self.driver.dt
                    + self.spec.phase.gamma * energy
                    + 0.5 * self.consts.m * v_sq
                    + self.consts.f0 / (2.0 * self.consts.d_const) * lp
                    - theta;
                d.rows.push(EnergyRow {
                    t: state.t(),
                    h_norm_sq: h_sq,
                    v_norm_sq: v_sq,
                    eta_norm_sq: eta_sq,
                    lp_pow: lp,
                    theta1: theta,
                    residual,
                });
                prev_energy = energy;
            }
        }
        Ok(())
    }
}

/// Result of a transformed-system run.
pub struct PsiRun {
    pub state: CocycleState,
    pub diagnostics: EnergyDiagnostics,
}

/// Evolves the transformed system from `(v0, history)` at `tau` for
/// `n_steps` of size `dt`.
#[allow(clippy::too_many_arguments)]
pub fn evolve_psi(
    spec: &SystemSpec,
    driver: &Driver,
    v0: Field,
    history: &HistorySegment,
    want_diag: bool,
) -> Result<PsiRun> {
    let degree = if want_diag {
        2 * spec.nonlinearity.p as usize
    } else {
        (2 * spec.nonlinearity.p as usize).saturating_sub(1).max(1)
    };
    let integrator = Integrator::with_degree(spec, driver, degree)?;
    let mut state = integrator.init_state(v0, history);
    let mut diag = EnergyDiagnostics::default();
    integrator.evolve(
        &mut state,
        driver.n_steps,
        if want_diag { Some(&mut diag) } else { None },
    )?;
    Ok(PsiRun { state, diagnostics: diag })
}

/// Result of an original-variable run.
pub struct XiRun {
    pub u: Field,
    pub u_segment: HistorySegment,
    pub psi: PsiRun,
}

/// Noise value seen by the original system at time `t`.
pub fn noise_at(path: &NoisePath, mode: NoiseMode, t: f64) -> Result<f64> {
    Ok(match mode {
        NoiseMode::Off => 0.0,
        NoiseMode::WhiteOu => path.z_star_at(t),
        NoiseMode::Colored(delta) => path.y_at(path.delta_index(delta)?, t),
    })
}

/// The original-variable cocycle through the conjugation: subtract the
/// noise-profile process from the data, run the transformed system, add it
/// back to the output pair.
pub fn cocycle_xi(
    spec: &SystemSpec,
    path: &NoisePath,
    driver: &Driver,
    u0: &Field,
    u_history: &HistorySegment,
    want_diag: bool,
) -> Result<XiRun> {
    let tau = driver.t0;
    let z_tau = noise_at(path, driver.mode, tau)?;
    let mut v0 = u0.clone();
    v0.add_scaled(-z_tau, &spec.phi);
    let values: Vec<Field> = spec
        .phase
        .grid
        .nodes()
        .zip(&u_history.values)
        .map(|(r, h)| {
            let mut f = h.clone();
            f.add_scaled(-noise_at(path, driver.mode, tau + r).unwrap_or(0.0), &spec.phi);
            f
        })
        .collect();
    let history_v = HistorySegment { values };
    let psi = evolve_psi(spec, driver, v0, &history_v, want_diag)?;
    let t_end = psi.state.t();
    let z_end = noise_at(path, driver.mode, t_end)?;
    let mut u = psi.state.v().clone();
    u.add_scaled(z_end, &spec.phi);
    let mut u_segment = psi.state.ledger.segment_on(&spec.phase);
    for (r, f) in spec.phase.grid.nodes().zip(u_segment.values.iter_mut()) {
        f.add_scaled(noise_at(path, driver.mode, t_end + r)?, &spec.phi);
    }
    Ok(XiRun { u, u_segment, psi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelFamily;
    use crate::spectral::{DiffusionKind, SpectralBasis};

    fn basis(n: usize) -> SpectralBasis {
        SpectralBasis::new(std::f64::consts::PI, n, 4 * n).unwrap()
    }

    fn constant_diffusion(n: usize, m: f64) -> DiffusionSpec {
        DiffusionSpec::new(DiffusionKind::Constant, m, m, Field::zeros(n)).unwrap()
    }

    fn spec_linear_single_mode(kernel: Option<MemoryKernel>) -> SystemSpec {
        let b = basis(1);
        SystemSpec {
            phase: PhaseSpaceParams::with_resolution(0.45, 0.01).unwrap(),
            diffusion: constant_diffusion(1, 1.0),
            nonlinearity: NonlinearitySpec::zero(1),
            phi: Field::zeros(1),
            forcing: Field::zeros(1),
            kernel,
            basis: b,
        }
    }

    #[test]
    fn heat_decay_without_memory() {
        let spec = spec_linear_single_mode(None);
        let dt = 1e-3;
        let n_steps = 2000;
        let driver = Driver::deterministic(&spec, 0.0, n_steps, dt);
        let hist = HistorySegment::zeros(&spec.phase, 1);
        let run = evolve_psi(&spec, &driver, Field::from_coeffs(vec![1.0]), &hist, false).unwrap();
        let want = (-2.0_f64).exp(); // lambda_1 = 1, T = 2
        let got = run.state.v().coeffs[0];
        assert!((got - want).abs() < 5.0 * dt * dt, "got {got}, want {want}");
    }

    /// Exponential-kernel reduction: with k(t) = e^{-d t} the memory term is
    /// an auxiliary ODE variable m' = b - d m, so the solver output can be
    /// compared against the exact 2x2 matrix exponential.
    fn oracle_2x2(lambda: f64, d: f64, t: f64) -> (f64, f64) {
        // x' = M x, M = [[-lambda, -lambda], [1, -d]], x(0) = (1, 0).
        let (a11, a12, a21, a22) = (-lambda, -lambda, 1.0, -d);
        let tr = a11 + a22;
        let det = a11 * a22 - a12 * a21;
        let disc = tr * tr / 4.0 - det;
        let (e1, e2);
        if disc >= 0.0 {
            let s = disc.sqrt();
            let (m1, m2) = (tr / 2.0 + s, tr / 2.0 - s);
            // x(t) = exp(Mt) x0 via spectral decomposition (real case).
            let c1 = ((m1 * t).exp() - (m2 * t).exp()) / (m1 - m2);
            let c0 = (m1 * (m2 * t).exp() - m2 * (m1 * t).exp()) / (m1 - m2);
            e1 = c0 + c1 * a11;
            e2 = c1 * a21;
        } else {
            let w = (-disc).sqrt();
            let ex = (tr / 2.0 * t).exp();
            let c0 = ex * ((w * t).cos() - tr / 2.0 * (w * t).sin() / w);
            let c1 = ex * (w * t).sin() / w;
            e1 = c0 + c1 * a11;
            e2 = c1 * a21;
        }
        (e1, e2)
    }

    fn run_exp_kernel(dt: f64, t_end: f64, cells: usize) -> (f64, f64) {
        // k(t) = e^{-2t} means family exp(d=2, c=2).
        let kernel =
            MemoryKernel::with_cells(KernelFamily::Exponential { d: 2.0, c: 2.0 }, 1e-8, cells)
                .unwrap();
        let spec = spec_linear_single_mode(Some(kernel));
        let n_steps = (t_end / dt).round() as usize;
        let driver = Driver::deterministic(&spec, 0.0, n_steps, dt);
        let hist = HistorySegment::zeros(&spec.phase, 1);
        let run = evolve_psi(&spec, &driver, Field::from_coeffs(vec![1.0]), &hist, false).unwrap();
        let mut worst: f64 = 0.0;
        let mut at_end = 0.0;
        for k in 0..=n_steps {
            let t = k as f64 * dt;
            let (want, _) = oracle_2x2(1.0, 2.0, t);
            let got = run.state.ledger.v_at(t).coeffs[0];
            worst = worst.max((got - want).abs());
            at_end = got;
        }
        (worst, at_end)
    }

    #[test]
    fn exponential_kernel_matches_ode_oracle() {
        let (err, _) = run_exp_kernel(1e-3, 5.0, 100);
        assert!(err < 1e-5, "sup error {err}");
    }

    #[test]
    fn convergence_order_is_two() {
        // A finer kernel grid keeps the spatial quadrature floor far below
        // the time-stepping error being measured.
        let e4 = run_exp_kernel(4e-3, 5.0, 1600).0;
        let e2 = run_exp_kernel(2e-3, 5.0, 1600).0;
        let e1 = run_exp_kernel(1e-3, 5.0, 1600).0;
        let p1 = (e4 / e2).log2();
        let p2 = (e2 / e1).log2();
        assert!((p1 - 2.0).abs() < 0.2 && (p2 - 2.0).abs() < 0.2, "orders {p1}, {p2}");
    }

    #[test]
    fn zero_data_is_equilibrium() {
        let kernel =
            MemoryKernel::new(KernelFamily::Exponential { d: 2.0, c: 1.0 }, 1e-8).unwrap();
        let b = basis(4);
        let spec = SystemSpec {
            phase: PhaseSpaceParams::with_resolution(0.45, 0.01).unwrap(),
            diffusion: DiffusionSpec::new(
                DiffusionKind::Rational,
                1.0,
                2.0,
                Field::mode(4, 0, 1.0),
            )
            .unwrap(),
            nonlinearity: NonlinearitySpec::new(2, vec![1.0, 0.0, -1.0, 0.0]).unwrap(),
            phi: Field::zeros(4),
            forcing: Field::zeros(4),
            kernel: Some(kernel),
            basis: b,
        };
        let driver = Driver::deterministic(&spec, 0.0, 500, 1e-3);
        let hist = HistorySegment::zeros(&spec.phase, 4);
        let run = evolve_psi(&spec, &driver, Field::zeros(4), &hist, false).unwrap();
        assert_eq!(run.state.v().h_norm_sq(), 0.0);
    }

    fn nonlinear_spec(n: usize, phi_amp: f64) -> SystemSpec {
        let kernel =
            MemoryKernel::new(KernelFamily::Exponential { d: 2.0, c: 2.0 }, 1e-8).unwrap();
        let b = basis(n);
        let mut phi = Field::zeros(n);
        phi.coeffs[0] = phi_amp;
        if n > 2 {
            phi.coeffs[2] = 0.3 * phi_amp;
        }
        let mut h = Field::zeros(n);
        h.coeffs[0] = 1.0;
        if n > 1 {
            h.coeffs[1] = -0.5;
        }
        let mut ell = Field::zeros(n);
        ell.coeffs[0] = 1.0;
        SystemSpec {
            phase: PhaseSpaceParams::with_resolution(0.45, 0.01).unwrap(),
            diffusion: DiffusionSpec::new(DiffusionKind::Rational, 1.0, 2.0, ell).unwrap(),
            nonlinearity: NonlinearitySpec::new(2, vec![1.0, 0.0, -1.0, 0.0]).unwrap(),
            phi,
            forcing: h,
            kernel: Some(kernel),
            basis: b,
        }
    }

    #[test]
    fn continuity_in_initial_data() {
        let spec = nonlinear_spec(4, 0.5);
        let path = NoisePath::generate(9, 1e-3, 30.0, 2.0, &[]).unwrap();
        let driver = Driver::new(&spec, &path, NoiseMode::WhiteOu, 0.0, 1000, 1e-3).unwrap();
        let hist = HistorySegment::zeros(&spec.phase, 4);
        let v0a = Field::from_coeffs(vec![0.5, -0.2, 0.1, 0.0]);
        let mut v0b = v0a.clone();
        v0b.coeffs[0] += 1e-4;
        let int = Integrator::new(&spec, &driver).unwrap();
        let mut sa = int.init_state(v0a, &hist);
        let mut sb = int.init_state(v0b, &hist);
        let lip = spec.diffusion.lipschitz(10.0);
        let ell_n = spec.diffusion.ell_norm();
        let sigma = spec.nonlinearity.bounds().sigma;
        let phi_v = spec.phi.v_norm_sq(spec.basis.lambdas());
        let mut sup_term: f64 = 0.0;
        for k in 0..1000 {
            int.step(&mut sa).unwrap();
            int.step(&mut sb).unwrap();
            let z = driver.z[k + 1];
            let v2 = sb.v().v_norm_sq(spec.basis.lambdas());
            sup_term = sup_term.max(phi_v * z * z + v2);
            let c = lip * lip * ell_n * ell_n / spec.diffusion.m * sup_term + sigma;
            let diff = sa.v().sub(sb.v()).h_norm_sq().sqrt();
            let bound = ((k + 1) as f64 * 1e-3 * c).exp() * 1e-4 * 1.05 + 1e-12;
            assert!(diff <= bound, "diff {diff} > bound {bound} at step {k}");
        }
    }

    #[test]
    fn v_regularity_stays_bounded() {
        let spec = nonlinear_spec(8, 0.5);
        let path = NoisePath::generate(21, 1e-3, 30.0, 3.0, &[]).unwrap();
        let driver = Driver::new(&spec, &path, NoiseMode::WhiteOu, 0.0, 3000, 1e-3).unwrap();
        let hist = HistorySegment::from_fn(&spec.phase, |r| {
            Field::from_coeffs((0..8).map(|j| 0.2 * (r * (j as f64 + 1.0)).cos()).collect())
        });
        let int = Integrator::new(&spec, &driver).unwrap();
        let mut st = int.init_state(Field::from_coeffs(vec![0.5; 8]), &hist);
        let mut sup_v: f64 = 0.0;
        for _ in 0..3000 {
            int.step(&mut st).unwrap();
            sup_v = sup_v.max(st.v().v_norm_sq(spec.basis.lambdas()));
        }
        assert!(sup_v.is_finite() && sup_v < 1e4, "sup ||v||^2 = {sup_v}");
    }

    #[test]
    fn ledger_reconstruction_matches_direct_quadrature() {
        let spec = nonlinear_spec(4, 0.4);
        let path = NoisePath::generate(13, 1e-3, 30.0, 1.0, &[]).unwrap();
        let driver = Driver::new(&spec, &path, NoiseMode::WhiteOu, 0.0, 700, 1e-3).unwrap();
        let hist = HistorySegment::from_fn(&spec.phase, |r| {
            Field::from_coeffs(vec![(0.2 * r).exp(), 0.3 * (r).cos(), 0.0, 0.1])
        });
        let int = Integrator::new(&spec, &driver).unwrap();
        let mut st = int.init_state(Field::from_coeffs(vec![0.3, 0.1, -0.2, 0.05]), &hist);
        int.evolve(&mut st, 700, None).unwrap();
        let t = st.t();
        let tau = 0.0;
        // Direct quadrature of int_{t-s}^{t} v(r) dr with fine trapezoid.
        for &s in &[0.1, 0.35, t - tau, t - tau + 0.4, t - tau + 2.0] {
            let eta = st.ledger.eta_at(s);
            let n_fine = 4000;
            let h = s / n_fine as f64;
            let mut direct = Field::zeros(4);
            for i in 0..=n_fine {
                let r = t - s + i as f64 * h;
                let w = if i == 0 || i == n_fine { 0.5 * h } else { h };
                direct.add_scaled(w, &st.ledger.v_at(r));
            }
            let err = eta.sub(&direct).h_norm_sq().sqrt();
            let scale = eta.h_norm_sq().sqrt().max(1e-6);
            assert!(err < 5e-4 * scale.max(1.0), "s={s}: err {err} scale {scale}");
        }
        // Continuity across the junction s = t - tau.
        let below = st.ledger.eta_at(t - tau - 1e-9);
        let above = st.ledger.eta_at(t - tau + 1e-9);
        assert!(below.sub(&above).h_norm_sq().sqrt() < 1e-6);
    }

    #[test]
    fn history_norm_constant_trajectory() {
        let spec = spec_linear_single_mode(None);
        let gamma = spec.phase.gamma;
        let w = 0.7;
        let hist = HistorySegment::from_fn(&spec.phase, |_| Field::from_coeffs(vec![w]));
        let lambdas = spec.basis.lambdas();
        let mut ledger = HistoryLedger::new(
            &spec.phase,
            &hist,
            lambdas,
            Field::from_coeffs(vec![w]),
            0.0,
            1e-2,
            100_000,
        );
        for _ in 0..500 {
            ledger.push(Field::from_coeffs(vec![w]));
        }
        let got = ledger.history_norm_sq(lambdas);
        let want = lambdas[0] * w * w / gamma;
        assert!((got - want).abs() < 1e-3 * want, "got {got}, want {want}");
        // Zero trajectory gives zero.
        let zhist = HistorySegment::zeros(&spec.phase, 1);
        let zledger = HistoryLedger::new(
            &spec.phase,
            &zhist,
            lambdas,
            Field::zeros(1),
            0.0,
            1e-2,
            100,
        );
        assert_eq!(zledger.history_norm_sq(lambdas), 0.0);
    }

    #[test]
    fn history_norm_is_time_continuous() {
        let spec = nonlinear_spec(4, 0.3);
        let path = NoisePath::generate(17, 1e-3, 30.0, 1.0, &[]).unwrap();
        let driver = Driver::new(&spec, &path, NoiseMode::WhiteOu, 0.0, 400, 1e-3).unwrap();
        let int = Integrator::new(&spec, &driver).unwrap();
        let hist = HistorySegment::from_fn(&spec.phase, |r| {
            Field::from_coeffs(vec![(0.1 * r).exp(), 0.0, 0.2, 0.0])
        });
        let mut st = int.init_state(Field::from_coeffs(vec![0.4, 0.0, 0.0, 0.1]), &hist);
        let mut prev = st.ledger.history_norm_sq(spec.basis.lambdas());
        for _ in 0..400 {
            int.step(&mut st).unwrap();
            let now = st.ledger.history_norm_sq(spec.basis.lambdas());
            // |d/dt ||v_t||^2| <= ||v(t)||^2 + gamma ||v_t||^2.
            let rate = st.v().v_norm_sq(spec.basis.lambdas()) + spec.phase.gamma * now + 1.0;
            assert!((now - prev).abs() < 1.5 * rate * driver.dt, "jump {}", now - prev);
            prev = now;
        }
    }

    #[test]
    fn theta_bound_closed_forms() {
        // phi = 0, h = 0, alpha = 0 (zero nonlinearity): only C_1 survives,
        // and with zero nonlinearity C_1 = 0 as well.
        let spec = spec_linear_single_mode(None);
        let plan = NonlinearPlan::new(&spec.basis, 2);
        let consts = EnergyConstants::new(&spec, &plan);
        assert_eq!(consts.theta1(1.3, 0.0), 0.0);

        // Deterministic theta for the nonlinear default: z = 0, C_2 = 0 gives
        // 2 alpha L + c_tilde2 (1 + |phi|_{2p}^{2p}) + 4|h|^2/(m lambda_1).
        let spec2 = nonlinear_spec(4, 0.5);
        let plan2 = NonlinearPlan::new(&spec2.basis, 4);
        let consts2 = EnergyConstants::new(&spec2, &plan2);
        let b = spec2.nonlinearity.bounds();
        let want = 2.0 * b.alpha * spec2.basis.l
            + spec2.nonlinearity.c_tilde2(spec2.basis.l) * (1.0 + consts2.phi_2p)
            + 4.0 * spec2.forcing.h_norm_sq() / (spec2.diffusion.m * spec2.basis.lambda1());
        assert!((consts2.theta1(0.0, 0.0) - want).abs() < 1e-12 * want);
    }

    #[test]
    fn convolution_bounded_by_c2_over_two() {
        let kernel =
            MemoryKernel::new(KernelFamily::Exponential { d: 2.0, c: 2.0 }, 1e-8).unwrap();
        let path = NoisePath::generate(31, 1e-3, 30.0, 5.0, &[]).unwrap();
        let z = noise_values(&path, NoiseMode::WhiteOu).unwrap();
        let c2 = c2_series(&kernel, &path, &z);
        for i in 0..50 {
            let t = 0.1 * i as f64;
            let conv = kernel_noise_convolution(&kernel, |s| path.z_star_at(s), t);
            assert!(conv.abs() <= 0.5 * c2.at(t) * (1.0 + 1e-6) + 1e-9, "t={t}");
        }
    }

    #[test]
    fn energy_inequality_residual_small() {
        let spec = nonlinear_spec(8, 0.5);
        let dt = 1e-3;
        let path = NoisePath::generate(5, dt, 30.0, 2.0, &[]).unwrap();
        let driver = Driver::new(&spec, &path, NoiseMode::WhiteOu, 0.0, 2000, dt).unwrap();
        let hist = HistorySegment::from_fn(&spec.phase, |r| {
            Field::from_coeffs((0..8).map(|j| 0.3 * ((j as f64 + 1.0) * r).exp()).collect())
        });
        let mut diag = EnergyDiagnostics::default();
        let int = Integrator::new(&spec, &driver).unwrap();
        let mut st = int.init_state(Field::from_coeffs(vec![0.5; 8]), &hist);
        int.evolve(&mut st, 2000, Some(&mut diag)).unwrap();
        let worst = diag.max_positive_residual();
        assert!(worst <= 50.0 * dt, "residual {worst}");
        // Integrated form: E(T) + m int ||v||^2 + f0/(2D) int |v|_2p
        //   <= E(0) + int theta_1 + O(dt).
        let e0: f64 = {
            let (h_sq, _, eta_sq, _) = int.energy_parts(&int.init_state(
                Field::from_coeffs(vec![0.5; 8]),
                &hist,
            ));
            h_sq + eta_sq
        };
        let mut int_v = 0.0;
        let mut int_lp = 0.0;
        let mut int_theta = 0.0;
        for row in &diag.rows {
            int_v += dt * row.v_norm_sq;
            int_lp += dt * row.lp_pow;
            int_theta += dt * row.theta1;
        }
        let last = diag.rows.last().unwrap();
        let lhs = last.h_norm_sq + last.eta_norm_sq
            + spec.diffusion.m * int_v
            + spec.nonlinearity.f0() / (2.0 * spec.nonlinearity.d_const()) * int_lp;
        let rhs = e0 + int_theta;
        assert!(lhs <= rhs * (1.0 + 1e-3) + 100.0 * dt, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn conjugation_with_zero_profile_is_identity() {
        let mut spec = nonlinear_spec(4, 0.0);
        spec.phi = Field::zeros(4);
        let path = NoisePath::generate(3, 1e-3, 30.0, 1.0, &[]).unwrap();
        let driver = Driver::new(&spec, &path, NoiseMode::WhiteOu, 0.0, 500, 1e-3).unwrap();
        let hist = HistorySegment::from_fn(&spec.phase, |r| {
            Field::from_coeffs(vec![0.2 * (0.3 * r).exp(), 0.0, 0.1, 0.0])
        });
        let u0 = Field::from_coeffs(vec![0.4, -0.1, 0.0, 0.2]);
        let xi = cocycle_xi(&spec, &path, &driver, &u0, &hist, false).unwrap();
        let psi = evolve_psi(&spec, &driver, u0, &hist, false).unwrap();
        let diff = xi.u.sub(psi.state.v()).h_norm_sq().sqrt();
        assert!(diff <= 1e-12, "diff {diff}");
    }

    #[test]
    fn cocycle_property_under_rebase() {
        // Xi(t + s, omega, x) vs Xi(t, theta_s omega, Xi(s, omega, x)):
        // the restart reads the same path, so the only differences are the
        // multistep bootstrap and the resampled history, both tiny.
        let mut spec = nonlinear_spec(4, 0.5);
        let dt = 1e-3;
        // History nodes on step boundaries make the restart resampling exact.
        spec.phase = PhaseSpaceParams::with_resolution(0.45, dt).unwrap();
        let path = NoisePath::generate(29, dt, 100.0, 4.0, &[]).unwrap();
        let hist = HistorySegment::from_fn(&spec.phase, |r| {
            Field::from_coeffs(vec![0.3 * (0.2 * r).exp(), 0.1, 0.0, -0.05])
        });
        // Compatible initial value (= history at 0): a restarted run then
        // resamples a continuous trajectory. Data with a genuine jump at tau
        // cannot round-trip through a sampled history segment.
        let u0 = hist.values.last().unwrap().clone();
        let s_steps = 1500;
        let t_steps = 1500;
        let driver_full =
            Driver::new(&spec, &path, NoiseMode::WhiteOu, 0.0, s_steps + t_steps, dt).unwrap();
        let full = cocycle_xi(&spec, &path, &driver_full, &u0, &hist, false).unwrap();
        let driver_s = Driver::new(&spec, &path, NoiseMode::WhiteOu, 0.0, s_steps, dt).unwrap();
        let mid = cocycle_xi(&spec, &path, &driver_s, &u0, &hist, false).unwrap();
        let driver_t = Driver::new(
            &spec,
            &path,
            NoiseMode::WhiteOu,
            s_steps as f64 * dt,
            t_steps,
            dt,
        )
        .unwrap();
        let two = cocycle_xi(&spec, &path, &driver_t, &mid.u, &mid.u_segment, false).unwrap();
        let rel = full.u.sub(&two.u).h_norm_sq().sqrt() / full.u.h_norm_sq().sqrt().max(1e-12);
        assert!(rel < 1e-6, "relative cocycle defect {rel}");
    }
}
