//! Absorbing-ball radii, pullback-attractor cloud approximation, Hausdorff
//! semidistance in the product phase space, and the colored-noise
//! convergence experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::{
    cocycle_xi, noise_values, theta1_series, Driver, NoiseMode, SystemSpec,
};
use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::kernel::{HistorySegment, PhaseSpaceParams};
use crate::noise::NoisePath;

/// One phase-space point: current field plus a history segment on the cloud
/// grid.
#[derive(Debug, Clone)]
pub struct CloudPoint {
    pub field: Field,
    pub history: HistorySegment,
}

/// Finite set of phase-space points sharing one history grid.
#[derive(Debug, Clone)]
pub struct CloudX {
    pub phase: PhaseSpaceParams,
    pub points: Vec<CloudPoint>,
    pub seed: u64,
    pub pullback_time: f64,
    pub mode_tag: String,
}

impl CloudX {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Squared product-space norm of a point on this cloud's grid.
    pub fn x_norm_sq(&self, point: &CloudPoint, lambdas: &[f64]) -> f64 {
        point.field.h_norm_sq() + self.phase.lv2_norm_sq(lambdas, &point.history)
    }
}

fn point_dist_sq(
    phase: &PhaseSpaceParams,
    lambdas: &[f64],
    a: &CloudPoint,
    b: &CloudPoint,
) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.field.coeffs.iter().zip(&b.field.coeffs) {
        let d = x - y;
        acc += d * d;
    }
    for i in 0..phase.grid.n {
        let w = phase.grid.weight(i) * (phase.gamma * phase.grid.node(i)).exp();
        let (ha, hb) = (&a.history.values[i], &b.history.values[i]);
        let mut vsq = 0.0;
        for j in 0..lambdas.len() {
            let d = ha.coeffs[j] - hb.coeffs[j];
            vsq += lambdas[j] * d * d;
        }
        acc += w * vsq;
    }
    acc
}

/// Hausdorff semidistance `sup_{x in c1} inf_{y in c2} ||x - y||_X`;
/// asymmetric, exact on the finite sets.
pub fn hausdorff_semidist(c1: &CloudX, c2: &CloudX, lambdas: &[f64]) -> Result<f64> {
    if c1.is_empty() || c2.is_empty() {
        return Err(CoreError::EmptyCloud);
    }
    if c1.phase != c2.phase {
        return Err(CoreError::InvalidParameter(
            "clouds must share one history grid".into(),
        ));
    }
    let sup_sq = c1
        .points
        .par_iter()
        .map(|x| {
            c2.points
                .iter()
                .map(|y| point_dist_sq(&c1.phase, lambdas, x, y))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max);
    Ok(sup_sq.sqrt())
}

/// Linear resampling of a history segment onto another grid (clamped at the
/// source horizon).
pub fn resample_segment(
    from: &PhaseSpaceParams,
    segment: &HistorySegment,
    to: &PhaseSpaceParams,
) -> HistorySegment {
    let n_modes = segment.n_modes();
    let values = to
        .grid
        .nodes()
        .map(|r| {
            let pos = (r - from.grid.start) / from.grid.step;
            if pos <= 0.0 {
                return segment.values[0].clone();
            }
            let last = (from.grid.n - 1) as f64;
            if pos >= last {
                return segment.values[from.grid.n - 1].clone();
            }
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let mut f = Field::zeros(n_modes);
            f.add_scaled(1.0 - frac, &segment.values[i]);
            f.add_scaled(frac, &segment.values[i + 1]);
            f
        })
        .collect();
    HistorySegment { values }
}

/// Absorbing-ball radius at the base point shifted by `base_t`:
/// `rho^2 = 1 + 2 K_2 int_{-inf}^0 e^{gamma s} theta_1(s + base) ds
///        + 2 |phi|^2 z(base)^2 + 2 ||phi z(base + .)||^2`.
pub fn absorbing_radius_sq(
    spec: &SystemSpec,
    path: &NoisePath,
    mode: NoiseMode,
    base_t: f64,
) -> Result<f64> {
    let gamma = spec.phase.gamma;
    let horizon = 40.0 / gamma;
    if !matches!(mode, NoiseMode::Off) {
        let back = spec.kernel.as_ref().map(|k| k.s_cut).unwrap_or(0.0);
        path.require_cover(base_t - horizon - back, base_t)?;
    }
    let theta = theta1_series(spec, path, mode)?;
    let z = noise_values(path, mode)?;
    let zs = crate::dynamics::ScalarSeries {
        t0: path.t_start(),
        h: path.h,
        values: z,
    };
    // Trapezoid over [-horizon, 0] at the path resolution.
    let h = path.h;
    let n = (horizon / h).ceil() as usize;
    let mut int_theta = 0.0;
    let mut int_z_sq = 0.0;
    for i in 0..=n {
        let s = -(i as f64) * h;
        let w = if i == 0 || i == n { 0.5 * h } else { h };
        let weight = w * (gamma * s).exp();
        int_theta += weight * theta.at(base_t + s);
        let zv = zs.at(base_t + s);
        int_z_sq += weight * zv * zv;
    }
    let z0 = zs.at(base_t);
    let phi_h_sq = spec.phi.h_norm_sq();
    let phi_v_sq = spec.phi.v_norm_sq(spec.basis.lambdas());
    Ok(1.0 + 2.0 * spec.k2() * int_theta
        + 2.0 * phi_h_sq * z0 * z0
        + 2.0 * phi_v_sq * int_z_sq)
}

/// Temperedness diagnostic: `e^{-c t} rho^2(theta_{-t} omega)` sampled on a
/// ladder of pullback times.
pub fn temperedness_samples(
    spec: &SystemSpec,
    path: &NoisePath,
    mode: NoiseMode,
    c: f64,
    times: &[f64],
) -> Result<Vec<(f64, f64)>> {
    times
        .iter()
        .map(|&t| {
            let rho_sq = absorbing_radius_sq(spec, path, mode, -t)?;
            Ok((t, (-c * t).exp() * rho_sq))
        })
        .collect()
}

/// Ensemble sampling: points uniform in the H-ball of the given radius with
/// zero history, plus a few history-perturbed variants still inside the
/// product-space ball.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n_points: usize,
    pub n_history_perturbed: usize,
    pub radius: f64,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn new(radius: f64, seed: u64) -> Self {
        EnsembleConfig { n_points: 64, n_history_perturbed: 8, radius, seed }
    }
}

pub fn sample_ensemble(
    n_modes: usize,
    lambdas: &[f64],
    phase: &PhaseSpaceParams,
    cfg: &EnsembleConfig,
) -> CloudX {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0x656e73);
    let mut points = Vec::with_capacity(cfg.n_points);
    for i in 0..cfg.n_points {
        let perturb_history = i >= cfg.n_points.saturating_sub(cfg.n_history_perturbed);
        let dir: Vec<f64> = (0..n_modes).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-300);
        let u: f64 = rng.gen::<f64>();
        let field_radius = cfg.radius
            * u.powf(1.0 / n_modes as f64)
            * if perturb_history { 0.8 } else { 1.0 };
        let field = Field::from_coeffs(dir.iter().map(|g| g / norm * field_radius).collect());
        let history = if perturb_history {
            let xi: Vec<f64> = (0..n_modes).map(|_| rng.sample(StandardNormal)).collect();
            let kappa: f64 = 0.5 + rng.gen::<f64>();
            let shape = HistorySegment::from_fn(phase, |r| {
                Field::from_coeffs(xi.iter().map(|x| x * (kappa * r).exp()).collect())
            });
            let norm_sq = phase.lv2_norm_sq(lambdas, &shape);
            let target = 0.6 * cfg.radius;
            let scale = if norm_sq > 0.0 { target / norm_sq.sqrt() } else { 0.0 };
            HistorySegment {
                values: shape.values.iter().map(|f| f.scaled(scale)).collect(),
            }
        } else {
            HistorySegment::zeros(phase, n_modes)
        };
        points.push(CloudPoint { field, history });
    }
    CloudX {
        phase: phase.clone(),
        points,
        seed: cfg.seed,
        pullback_time: 0.0,
        mode_tag: "ensemble".into(),
    }
}

/// Pullback image: evolve every ensemble point from `theta_{-t} omega` over
/// `[-t, base]`, reporting the cloud of `(u, u_history)` pairs at the base
/// time. Members evolve independently in parallel.
#[allow(clippy::too_many_arguments)]
pub fn pullback_cloud(
    spec: &SystemSpec,
    path: &NoisePath,
    mode: NoiseMode,
    ensemble: &CloudX,
    pullback_time: f64,
    base_t: f64,
    dt: f64,
    out_phase: &PhaseSpaceParams,
) -> Result<CloudX> {
    let n_steps = (pullback_time / dt).round() as usize;
    let tau = base_t - n_steps as f64 * dt;
    let driver = match mode {
        NoiseMode::Off => Driver::deterministic(spec, tau, n_steps, dt),
        _ => Driver::new(spec, path, mode, tau, n_steps, dt)?,
    };
    let points: Result<Vec<CloudPoint>> = ensemble
        .points
        .par_iter()
        .map(|p| {
            let hist = resample_segment(&ensemble.phase, &p.history, &spec.phase);
            let run = cocycle_xi(spec, path, &driver, &p.field, &hist, false)?;
            Ok(CloudPoint {
                field: run.u,
                history: resample_segment(&spec.phase, &run.u_segment, out_phase),
            })
        })
        .collect();
    Ok(CloudX {
        phase: out_phase.clone(),
        points: points?,
        seed: ensemble.seed,
        pullback_time,
        mode_tag: mode.tag(),
    })
}

/// Wong-Zakai solution gap for one initial point fed to both systems.
#[derive(Debug, Clone)]
pub struct WzGapRow {
    pub delta: f64,
    /// `sup_{[0,T]} |u_delta - u|` in the flat norm.
    pub sup_gap: f64,
    /// Weighted history-norm gap of the final segments.
    pub hist_gap: f64,
    /// Measured `sup |y_delta - z*|` over the run window.
    pub eps: f64,
    /// `1 + |u0|^2 + ... + int theta_1 + int theta_{1,delta}` per the
    /// pathwise comparison estimate.
    pub energy_budget: f64,
}

pub fn wz_solution_gap(
    spec: &SystemSpec,
    path: &NoisePath,
    u0: &Field,
    u_history: &HistorySegment,
    deltas: &[f64],
    t_horizon: f64,
    dt: f64,
) -> Result<Vec<WzGapRow>> {
    let n_steps = (t_horizon / dt).round() as usize;
    let lambdas = spec.basis.lambdas();
    let driver_white = Driver::new(spec, path, NoiseMode::WhiteOu, 0.0, n_steps, dt)?;
    let white = cocycle_xi(spec, path, &driver_white, u0, u_history, false)?;
    let theta_white = theta1_series(spec, path, NoiseMode::WhiteOu)?;
    let hist_norm_sq = spec.phase.lv2_norm_sq(lambdas, u_history);
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mode = NoiseMode::Colored(delta);
        let driver = Driver::new(spec, path, mode, 0.0, n_steps, dt)?;
        let colored = cocycle_xi(spec, path, &driver, u0, u_history, false)?;
        let mut sup_gap: f64 = 0.0;
        for k in 0..=n_steps {
            let t = k as f64 * dt;
            let mut uw = white.psi.state.ledger.v_at(t);
            uw.add_scaled(driver_white.z[k], &spec.phi);
            let mut uc = colored.psi.state.ledger.v_at(t);
            uc.add_scaled(driver.z[k], &spec.phi);
            sup_gap = sup_gap.max(uw.sub(&uc).h_norm_sq().sqrt());
        }
        let mut hist_gap_sq = 0.0;
        for i in 0..spec.phase.grid.n {
            let w = spec.phase.grid.weight(i)
                * (spec.phase.gamma * spec.phase.grid.node(i)).exp();
            let d = white.u_segment.values[i].sub(&colored.u_segment.values[i]);
            hist_gap_sq += w * d.v_norm_sq(lambdas);
        }
        let idx = path.delta_index(delta)?;
        let eps = path.sup_gap(idx, 0.0, t_horizon);
        let theta_col = theta1_series(spec, path, mode)?;
        let mut int_theta = 0.0;
        for k in 0..=n_steps {
            let w = if k == 0 || k == n_steps { 0.5 * dt } else { dt };
            let t = k as f64 * dt;
            int_theta += w * (theta_white.at(t) + theta_col.at(t));
        }
        let energy_budget = 1.0 + 2.0 * u0.h_norm_sq() + 2.0 * hist_norm_sq + int_theta;
        rows.push(WzGapRow {
            delta,
            sup_gap,
            hist_gap: hist_gap_sq.sqrt(),
            eps,
            energy_budget,
        });
    }
    Ok(rows)
}

/// Upper-semicontinuity experiment for one realization: white-system clouds
/// along a pullback ladder (Cauchy gap of the last two is the resolution
/// floor), then one colored cloud per `delta` compared against the finest
/// white cloud.
#[derive(Debug, Clone)]
pub struct UscReport {
    pub ladder: Vec<f64>,
    /// Semidistance of each ladder cloud to the last one.
    pub cauchy: Vec<f64>,
    pub floor: f64,
    pub converged: bool,
    pub rows: Vec<(f64, f64)>,
    pub white: CloudX,
}

#[allow(clippy::too_many_arguments)]
pub fn usc_experiment(
    spec: &SystemSpec,
    path: &NoisePath,
    pullback_times: &[f64],
    deltas: &[f64],
    ensemble_cfg: &EnsembleConfig,
    dt: f64,
    out_phase: &PhaseSpaceParams,
) -> Result<UscReport> {
    let lambdas = spec.basis.lambdas();
    let n = spec.basis.n;
    let mut clouds = Vec::with_capacity(pullback_times.len());
    for &t in pullback_times {
        let rho_sq = absorbing_radius_sq(spec, path, NoiseMode::WhiteOu, -t)?;
        let cfg = EnsembleConfig { radius: rho_sq.sqrt(), ..ensemble_cfg.clone() };
        let ensemble = sample_ensemble(n, lambdas, out_phase, &cfg);
        clouds.push(pullback_cloud(
            spec,
            path,
            NoiseMode::WhiteOu,
            &ensemble,
            t,
            0.0,
            dt,
            out_phase,
        )?);
    }
    let last = clouds.last().ok_or(CoreError::EmptyCloud)?;
    let cauchy: Result<Vec<f64>> = clouds
        .iter()
        .map(|c| hausdorff_semidist(c, last, lambdas))
        .collect();
    let cauchy = cauchy?;
    let floor = if clouds.len() >= 2 {
        hausdorff_semidist(&clouds[clouds.len() - 2], last, lambdas)?
    } else {
        0.0
    };
    // Converged when the final Cauchy gap sits well below the first one.
    let converged = cauchy.first().map(|&d0| floor <= 0.5 * d0.max(1e-12)).unwrap_or(false);
    let t_last = *pullback_times.last().unwrap();
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let rho_sq = absorbing_radius_sq(spec, path, NoiseMode::Colored(delta), -t_last)?;
        let cfg = EnsembleConfig { radius: rho_sq.sqrt(), ..ensemble_cfg.clone() };
        let ensemble = sample_ensemble(n, lambdas, out_phase, &cfg);
        let colored = pullback_cloud(
            spec,
            path,
            NoiseMode::Colored(delta),
            &ensemble,
            t_last,
            0.0,
            dt,
            out_phase,
        )?;
        rows.push((delta, hausdorff_semidist(&colored, last, lambdas)?));
    }
    Ok(UscReport {
        ladder: pullback_times.to_vec(),
        cauchy,
        floor,
        converged,
        rows,
        white: clouds.pop().unwrap(),
    })
}

/// Cloud-level surrogate of the invariance property: evolving the converged
/// cloud forward by `t_shift` should land near the pullback cloud of the
/// same tempered family anchored at the shifted base.
#[allow(clippy::too_many_arguments)]
pub fn invariance_defect(
    spec: &SystemSpec,
    path: &NoisePath,
    mode: NoiseMode,
    cloud: &CloudX,
    ensemble_radius: f64,
    t_last: f64,
    t_shift: f64,
    dt: f64,
) -> Result<f64> {
    let evolved = pullback_cloud(spec, path, mode, cloud, t_shift, t_shift, dt, &cloud.phase)?;
    let cfg = EnsembleConfig {
        n_points: cloud.points.len(),
        n_history_perturbed: cloud.points.len() / 8,
        radius: ensemble_radius,
        seed: cloud.seed,
    };
    let ensemble = sample_ensemble(spec.basis.n, spec.basis.lambdas(), &cloud.phase, &cfg);
    let shifted = pullback_cloud(spec, path, mode, &ensemble, t_last, t_shift, dt, &cloud.phase)?;
    hausdorff_semidist(&evolved, &shifted, spec.basis.lambdas())
}
