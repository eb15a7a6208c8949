//! The verification suite: every numbered criterion of the acceptance gate
//! as a callable check. The CLI `verify` experiment and the acceptance test
//! target both run these, so pass/fail logic lives in exactly one place.
//!
//! Desk scale: 16 modes on an interval of length pi, dt around 1e-3, five
//! seeds. Where a criterion leaves a free parameter (solver step for the
//! ensemble experiments, grid resolutions), the value is chosen so that the
//! whole suite stays within its runtime budget on a small machine.

use rayon::prelude::*;

use crate::attractor::{
    absorbing_radius_sq, hausdorff_semidist, pullback_cloud, sample_ensemble, usc_experiment,
    CloudPoint, CloudX, EnsembleConfig,
};
use crate::dynamics::{cocycle_xi, evolve_psi, Driver, NoiseMode, SystemSpec};
use crate::field::Field;
use crate::kernel::{
    HistorySegment, KernelFamily, MemoryKernel, PhaseSpaceParams, DEFAULT_TAIL_TOL,
};
use crate::noise::NoisePath;
use crate::quad::adaptive_simpson;
use crate::spectral::{DiffusionKind, DiffusionSpec, NonlinearitySpec, SpectralBasis};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub id: &'static str,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(id: &'static str, name: &'static str, pass: bool, detail: String) -> Self {
        CheckOutcome { id, name, pass, detail }
    }
}

pub fn run_all() -> Vec<CheckOutcome> {
    vec![
        c01_kernel_hypotheses(),
        c02_history_operator_bound(),
        c03_representation_equivalence(),
        c04_ode_oracle(),
        c05_noise_exactness(),
        c06_energy_inequality(),
        c07_pullback_absorption(),
        c08_conjugation_cocycle(),
        c09_wz_solution_gap(),
        c10_radius_convergence(),
        c11_upper_semicontinuity(),
        c12_deterministic_case(),
    ]
}

const GAMMA: f64 = 0.45;

/// Desk-scale nonlinear system: cubic reaction, rational nonlocal
/// coefficient, smooth low-mode noise profile and forcing.
fn desk_spec(n: usize, hist_h: f64, kernel_cells: usize) -> SystemSpec {
    let kernel = MemoryKernel::with_cells(
        KernelFamily::Exponential { d: 2.0, c: 2.0 },
        DEFAULT_TAIL_TOL,
        kernel_cells,
    )
    .unwrap();
    let basis = SpectralBasis::new(std::f64::consts::PI, n, 4 * n).unwrap();
    let mut phi = Field::zeros(n);
    phi.coeffs[0] = 0.4;
    if n > 2 {
        phi.coeffs[2] = 0.2;
    }
    let mut h = Field::zeros(n);
    h.coeffs[0] = 1.0;
    if n > 1 {
        h.coeffs[1] = -0.5;
    }
    let mut ell = Field::zeros(n);
    ell.coeffs[0] = 1.0;
    SystemSpec {
        phase: PhaseSpaceParams::with_resolution(GAMMA, hist_h).unwrap(),
        diffusion: DiffusionSpec::new(DiffusionKind::Rational, 1.0, 2.0, ell).unwrap(),
        nonlinearity: NonlinearitySpec::new(2, vec![1.0, 0.0, -1.0, 0.0]).unwrap(),
        phi,
        forcing: h,
        kernel: Some(kernel),
        basis,
    }
}

fn kernel_catalog() -> Vec<MemoryKernel> {
    let families = [
        KernelFamily::Exponential { d: 0.5, c: 1.0 },
        KernelFamily::Exponential { d: 2.0, c: 1.0 },
        KernelFamily::Exponential { d: 2.0, c: 2.0 },
        KernelFamily::Exponential { d: 4.0, c: 0.7 },
        KernelFamily::GammaSingular { d: 1.0, a: 0.1, c: 1.0 },
        KernelFamily::GammaSingular { d: 1.0, a: 0.5, c: 1.0 },
        KernelFamily::GammaSingular { d: 2.0, a: 0.9, c: 0.5 },
        KernelFamily::GammaSingular { d: 0.7, a: 0.3, c: 2.0 },
    ];
    families
        .iter()
        .map(|&f| MemoryKernel::new(f, DEFAULT_TAIL_TOL).unwrap())
        .collect()
}

/// Criterion 1: Kernel hypotheses on a parameter grid; the exponential family must
/// saturate the tail bound.
pub fn c01_kernel_hypotheses() -> CheckOutcome {
    let mut worst_h2 = f64::NEG_INFINITY;
    let mut worst_dom = f64::NEG_INFINITY;
    let mut worst_eq = 0.0_f64;
    let mut pass = true;
    for kernel in kernel_catalog() {
        for &s in &kernel.grid.nodes {
            let slack = (kernel.mu_prime(s) + kernel.varpi * kernel.mu(s)) / kernel.mu(s).max(1e-300);
            worst_h2 = worst_h2.max(slack);
            if slack > 1e-12 {
                pass = false;
            }
        }
        for i in 0..40 {
            let t = 10f64.powf(-3.0 + 4.0 * i as f64 / 39.0);
            let k = kernel.k_of_t(t);
            let bound = kernel.mu(t) / kernel.varpi;
            let rel = (k - bound) / bound;
            worst_dom = worst_dom.max(rel);
            if rel > 1e-9 {
                pass = false;
            }
            if matches!(kernel.family, KernelFamily::Exponential { .. }) {
                let eq = (k - bound).abs() / bound;
                worst_eq = worst_eq.max(eq);
                if eq > 1e-12 {
                    pass = false;
                }
            }
        }
    }
    CheckOutcome::new(
        "C01",
        "kernel hypotheses (sign, domination, exponential equality)",
        pass,
        format!(
            "max (mu'+varpi mu)/mu = {worst_h2:.2e}, max (k - mu/varpi)/bound = {worst_dom:.2e}, \
             exponential equality defect = {worst_eq:.2e}"
        ),
    )
}

fn random_history(phase: &PhaseSpaceParams, n_modes: usize, state: &mut u64) -> HistorySegment {
    let mut rand = || {
        *state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let amps: Vec<f64> = (0..n_modes).map(|_| rand()).collect();
    let freqs: Vec<f64> = (0..n_modes).map(|_| 2.5 * rand()).collect();
    let rates: Vec<f64> = (0..n_modes).map(|_| 0.4 * rand().abs() + 0.02).collect();
    HistorySegment::from_fn(phase, |r| {
        Field::from_coeffs(
            (0..n_modes)
                .map(|j| amps[j] * (rates[j] * r).exp() * (freqs[j] * r).cos())
                .collect(),
        )
    })
}

/// Criterion 2: The history-integration operator bound with its explicit constant.
pub fn c02_history_operator_bound() -> CheckOutcome {
    let phase = PhaseSpaceParams::with_resolution(GAMMA, 0.01).unwrap();
    let lambdas = [1.0, 4.0, 9.0];
    let kernels = [
        MemoryKernel::new(KernelFamily::Exponential { d: 2.0, c: 1.0 }, DEFAULT_TAIL_TOL).unwrap(),
        MemoryKernel::new(KernelFamily::GammaSingular { d: 1.0, a: 0.5, c: 1.0 }, DEFAULT_TAIL_TOL)
            .unwrap(),
    ];
    let mut worst = 0.0_f64;
    let mut state = 0x5eed_u64;
    for kernel in &kernels {
        let kmu = kernel.kmu_constant(GAMMA).unwrap();
        for _ in 0..100 {
            let hist = random_history(&phase, 3, &mut state);
            let eta = kernel.apply_j(&phase, &hist);
            let lhs = kernel.mu_v_norm_sq(&lambdas, &eta);
            let rhs = kmu * phase.lv2_norm_sq(&lambdas, &hist);
            worst = worst.max(lhs / rhs.max(1e-300));
        }
    }
    CheckOutcome::new(
        "C02",
        "history operator bound (100 random histories per kernel)",
        worst <= 1.01,
        format!("max ratio ||J phi||^2 / (K_mu ||phi||^2) = {worst:.6} (allowed 1.01)"),
    )
}

/// Criterion 3: Equivalence of the two memory representations, with refinement study.
pub fn c03_representation_equivalence() -> CheckOutcome {
    let traj = |r: f64| Field::from_coeffs(vec![(0.3 * r).exp() * (2.0 * r).cos()]);
    let lambdas = [1.0];
    let exp_err = MemoryKernel::with_cells(
        KernelFamily::Exponential { d: 2.0, c: 1.0 },
        DEFAULT_TAIL_TOL,
        100,
    )
    .unwrap()
    .equiv_representations(&lambdas, traj)
    .rel_err;
    let fam = KernelFamily::GammaSingular { d: 1.0, a: 0.5, c: 1.0 };
    let coarse = MemoryKernel::with_cells(fam, DEFAULT_TAIL_TOL, 100)
        .unwrap()
        .equiv_representations(&lambdas, traj)
        .rel_err;
    let fine = MemoryKernel::with_cells(fam, DEFAULT_TAIL_TOL, 200)
        .unwrap()
        .equiv_representations(&lambdas, traj)
        .rel_err;
    let pass = exp_err <= 1e-3 && coarse <= 1e-3 && fine <= 0.5 * coarse;
    CheckOutcome::new(
        "C03",
        "memory representation equivalence at 200 graded nodes",
        pass,
        format!(
            "rel_err exp = {exp_err:.2e}, singular = {coarse:.2e}, refined x2 = {fine:.2e} \
             (ratio {:.3})",
            fine / coarse
        ),
    )
}

fn oracle_2x2(lambda: f64, d: f64, t: f64) -> f64 {
    let (a11, a12, a21, a22) = (-lambda, -lambda, 1.0, -d);
    let tr = a11 + a22;
    let det = a11 * a22 - a12 * a21;
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        let (m1, m2) = (tr / 2.0 + s, tr / 2.0 - s);
        let c1 = ((m1 * t).exp() - (m2 * t).exp()) / (m1 - m2);
        let c0 = (m1 * (m2 * t).exp() - m2 * (m1 * t).exp()) / (m1 - m2);
        c0 + c1 * a11
    } else {
        let w = (-disc).sqrt();
        let ex = (tr / 2.0 * t).exp();
        let c0 = ex * ((w * t).cos() - tr / 2.0 * (w * t).sin() / w);
        let c1 = ex * (w * t).sin() / w;
        c0 + c1 * a11
    }
}

fn linear_memory_run(dt: f64, t_end: f64, cells: usize) -> f64 {
    let kernel = MemoryKernel::with_cells(
        KernelFamily::Exponential { d: 2.0, c: 2.0 },
        DEFAULT_TAIL_TOL,
        cells,
    )
    .unwrap();
    let basis = SpectralBasis::new(std::f64::consts::PI, 1, 4).unwrap();
    let spec = SystemSpec {
        phase: PhaseSpaceParams::with_resolution(GAMMA, 0.01).unwrap(),
        diffusion: DiffusionSpec::new(DiffusionKind::Constant, 1.0, 1.0, Field::zeros(1)).unwrap(),
        nonlinearity: NonlinearitySpec::zero(1),
        phi: Field::zeros(1),
        forcing: Field::zeros(1),
        kernel: Some(kernel),
        basis,
    };
    let n_steps = (t_end / dt).round() as usize;
    let driver = Driver::deterministic(&spec, 0.0, n_steps, dt);
    let hist = HistorySegment::zeros(&spec.phase, 1);
    let run = evolve_psi(&spec, &driver, Field::from_coeffs(vec![1.0]), &hist, false).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..=n_steps {
        let t = k as f64 * dt;
        worst = worst.max((run.state.ledger.v_at(t).coeffs[0] - oracle_2x2(1.0, 2.0, t)).abs());
    }
    worst
}

/// Criterion 4: The exponential-kernel reduction oracle and the observed order.
pub fn c04_ode_oracle() -> CheckOutcome {
    let err = linear_memory_run(1e-3, 5.0, 100);
    let e4 = linear_memory_run(4e-3, 5.0, 1600);
    let e2 = linear_memory_run(2e-3, 5.0, 1600);
    let e1 = linear_memory_run(1e-3, 5.0, 1600);
    let p1 = (e4 / e2).log2();
    let p2 = (e2 / e1).log2();
    let pass = err <= 1e-5 && (p1 - 2.0).abs() <= 0.2 && (p2 - 2.0).abs() <= 0.2;
    CheckOutcome::new(
        "C04",
        "exponential-kernel reduction oracle and convergence order",
        pass,
        format!("sup error {err:.2e} at dt=1e-3 (allowed 1e-5); observed orders {p1:.2}, {p2:.2}"),
    )
}

/// Criterion 5: Noise exactness: conditional moments, stationary statistics, and the
/// pathwise colored-noise approach.
pub fn c05_noise_exactness() -> CheckOutcome {
    let mut detail = String::new();
    let mut pass = true;

    // (a) one-step conditional moments against independent quadrature.
    let mut worst_moment = 0.0_f64;
    for &h in &[0.3, 0.05, 1e-3] {
        let (decay, alpha, beta) = crate::noise::ou_step_law(h);
        let var = adaptive_simpson(&|u: f64| (-2.0 * u).exp(), 0.0, h, 1e-15);
        let cov = adaptive_simpson(&|u: f64| (-u).exp(), 0.0, h, 1e-15);
        worst_moment = worst_moment
            .max((decay - (-h).exp()).abs())
            .max((alpha * h - cov).abs())
            .max((beta * beta + alpha * alpha * h - var).abs());
    }
    if worst_moment > 1e-12 {
        pass = false;
    }
    detail.push_str(&format!("moment defect {worst_moment:.1e}; "));

    // (b) Brownian variance across seeds.
    let n_seeds = 100_000u64;
    let (sum, sumsq) = (0..n_seeds)
        .into_par_iter()
        .map(|seed| {
            let p = NoisePath::generate(seed, 0.05, 0.0, 1.0, &[]).unwrap();
            let w = p.w_at(1.0);
            (w, w * w)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let mean = sum / n_seeds as f64;
    let var = sumsq / n_seeds as f64 - mean * mean;
    if (var - 1.0).abs() > 0.02 || mean.abs() > 3.0 / (n_seeds as f64).sqrt() {
        pass = false;
    }
    detail.push_str(&format!("Var W(1) = {var:.4}, mean = {mean:.1e}; "));

    // (c) stationary variance of z* over 1e5 steps.
    let p = NoisePath::generate(0, 0.05, 0.0, 5000.0, &[]).unwrap();
    let z = p.z_star_nodes();
    let var_z: f64 = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
    if (var_z - 0.5).abs() > 0.01 {
        pass = false;
    }
    detail.push_str(&format!("Var z* = {var_z:.4}; "));

    // (d) Wong-Zakai sup gap decreasing across the delta ladder.
    let deltas = [0.1, 0.01, 0.001];
    let monotone: u32 = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let p = NoisePath::generate(2000 + seed, 1e-3, 5.0, 10.0, &deltas).unwrap();
            let gaps: Vec<f64> = (0..3).map(|k| p.sup_gap(k, 0.0, 10.0)).collect();
            u32::from(gaps[0] > gaps[1] && gaps[1] > gaps[2])
        })
        .sum();
    if monotone < 95 {
        pass = false;
    }
    detail.push_str(&format!("WZ gap monotone on {monotone}/100 seeds"));

    CheckOutcome::new("C05", "noise exactness and pathwise colored-noise approach", pass, detail)
}

/// Criterion 6: The discrete dissipation inequality with a refinement-stable constant.
pub fn c06_energy_inequality() -> CheckOutcome {
    let seeds = [1u64, 2, 3, 4, 5];
    let dts = [4e-3, 2e-3, 1e-3];
    let t_end = 2.0;
    let mut cs: Vec<f64> = Vec::new();
    let mut worst_detail = String::new();
    for &seed in &seeds {
        let mut per_dt = Vec::new();
        for &dt in &dts {
            let spec = desk_spec(16, 0.02, 100);
            let path = NoisePath::generate(seed, dt, 40.0, t_end, &[]).unwrap();
            let n_steps = (t_end / dt).round() as usize;
            let driver = Driver::new(&spec, &path, NoiseMode::WhiteOu, 0.0, n_steps, dt).unwrap();
            let hist = random_history(&spec.phase, 16, &mut (seed.wrapping_mul(77) + 1));
            let run = evolve_psi(&spec, &driver, Field::from_coeffs(vec![0.3; 16]), &hist, true)
                .unwrap();
            let rmax = run.diagnostics.max_positive_residual();
            per_dt.push(rmax / dt);
        }
        let cmax = per_dt.iter().cloned().fold(0.0, f64::max);
        let cmin = per_dt.iter().cloned().fold(f64::INFINITY, f64::min);
        worst_detail = format!("seed {seed}: C(dt) = {per_dt:?}");
        // All residuals negative counts as a pass with margin; otherwise the
        // constant must be stable within +-50% across refinement.
        if cmax > 1e-9 && (cmax / cmin.max(1e-12) > 3.0 || cmax > 100.0) {
            return CheckOutcome::new(
                "C06",
                "discrete energy inequality",
                false,
                format!("unstable or large residual constant: {worst_detail}"),
            );
        }
        cs.push(cmax);
    }
    let overall = cs.iter().cloned().fold(0.0, f64::max);
    CheckOutcome::new(
        "C06",
        "discrete energy inequality",
        true,
        format!("max residual/dt over 5 seeds = {overall:.3e} (last {worst_detail})"),
    )
}

/// Criterion 7: Pullback absorption of 10x-inflated ensembles into the absorbing ball.
pub fn c07_pullback_absorption() -> CheckOutcome {
    let seeds = [1u64, 2, 3, 4, 5];
    let dt = 4e-3;
    let times = [20.0 / GAMMA, 40.0 / GAMMA];
    let out_phase = PhaseSpaceParams::with_resolution(GAMMA, 0.05).unwrap();
    let mut worst_ratio = 0.0_f64;
    let mut pass = true;
    for &seed in &seeds {
        let spec = desk_spec(16, 0.02, 32);
        let t_past = times[1] + 40.0 / GAMMA + 15.0;
        let path = match NoisePath::generate(seed, 1e-3, t_past, 1.0, &[]) {
            Ok(p) => p,
            Err(e) => {
                return CheckOutcome::new("C07", "pullback absorption", false, format!("{e}"))
            }
        };
        let rho_sq = absorbing_radius_sq(&spec, &path, NoiseMode::WhiteOu, 0.0).unwrap();
        let rho = rho_sq.sqrt();
        for &t in &times {
            let rho_shift =
                absorbing_radius_sq(&spec, &path, NoiseMode::WhiteOu, -t).unwrap().sqrt();
            let cfg = EnsembleConfig::new(10.0 * rho_shift, seed);
            let ensemble = sample_ensemble(16, spec.basis.lambdas(), &out_phase, &cfg);
            let cloud = match pullback_cloud(
                &spec,
                &path,
                NoiseMode::WhiteOu,
                &ensemble,
                t,
                0.0,
                dt,
                &out_phase,
            ) {
                Ok(c) => c,
                Err(e) => {
                    return CheckOutcome::new(
                        "C07",
                        "pullback absorption",
                        false,
                        format!("seed {seed}, t {t}: {e}"),
                    )
                }
            };
            for p in &cloud.points {
                let norm = cloud.x_norm_sq(p, spec.basis.lambdas()).sqrt();
                worst_ratio = worst_ratio.max(norm / rho);
                if norm > rho {
                    pass = false;
                }
            }
        }
    }
    CheckOutcome::new(
        "C07",
        "pullback absorption into B(0, rho)",
        pass,
        format!("worst |Xi(t, theta_-t, x)|_X / rho = {worst_ratio:.4} over 5 seeds x 2 times x 64 points"),
    )
}

/// Criterion 8: Conjugation identity at zero profile and the cocycle property.
pub fn c08_conjugation_cocycle() -> CheckOutcome {
    // Zero-profile conjugation is the identity.
    let mut spec = desk_spec(4, 0.01, 100);
    spec.phi = Field::zeros(4);
    let path = NoisePath::generate(3, 1e-3, 30.0, 1.0, &[]).unwrap();
    let driver = Driver::new(&spec, &path, NoiseMode::WhiteOu, 0.0, 500, 1e-3).unwrap();
    let hist = HistorySegment::from_fn(&spec.phase, |r| {
        Field::from_coeffs(vec![0.2 * (0.3 * r).exp(), 0.0, 0.1, 0.0])
    });
    let u0 = Field::from_coeffs(vec![0.4, -0.1, 0.0, 0.2]);
    let xi = cocycle_xi(&spec, &path, &driver, &u0, &hist, false).unwrap();
    let psi = evolve_psi(&spec, &driver, u0, &hist, false).unwrap();
    let conj = xi.u.sub(psi.state.v()).h_norm_sq().sqrt();

    // Cocycle property under rebasing.
    let dt = 1e-3;
    let mut spec2 = desk_spec(4, dt, 100);
    spec2.phase = PhaseSpaceParams::with_resolution(GAMMA, dt).unwrap();
    let path2 = NoisePath::generate(29, dt, 100.0, 4.0, &[]).unwrap();
    let hist2 = HistorySegment::from_fn(&spec2.phase, |r| {
        Field::from_coeffs(vec![0.3 * (0.2 * r).exp(), 0.1, 0.0, -0.05])
    });
    let u0b = hist2.values.last().unwrap().clone();
    let (s_steps, t_steps) = (1500usize, 1500usize);
    let driver_full =
        Driver::new(&spec2, &path2, NoiseMode::WhiteOu, 0.0, s_steps + t_steps, dt).unwrap();
    let full = cocycle_xi(&spec2, &path2, &driver_full, &u0b, &hist2, false).unwrap();
    let driver_s = Driver::new(&spec2, &path2, NoiseMode::WhiteOu, 0.0, s_steps, dt).unwrap();
    let mid = cocycle_xi(&spec2, &path2, &driver_s, &u0b, &hist2, false).unwrap();
    let driver_t =
        Driver::new(&spec2, &path2, NoiseMode::WhiteOu, s_steps as f64 * dt, t_steps, dt).unwrap();
    let two = cocycle_xi(&spec2, &path2, &driver_t, &mid.u, &mid.u_segment, false).unwrap();
    let rel = full.u.sub(&two.u).h_norm_sq().sqrt() / full.u.h_norm_sq().sqrt().max(1e-300);

    let pass = conj <= 1e-12 && rel <= 1e-6;
    CheckOutcome::new(
        "C08",
        "conjugation identity and cocycle property",
        pass,
        format!("zero-profile conjugation defect {conj:.2e} (<=1e-12), cocycle defect {rel:.2e} (<=1e-6)"),
    )
}

/// Criterion 9: Wong-Zakai solution gap: monotone in delta and consistent with the
/// pathwise comparison bound (squared gap linear in the noise gap).
pub fn c09_wz_solution_gap() -> CheckOutcome {
    let deltas = [0.1, 0.03, 0.01, 0.003];
    let t_end = 5.0;
    let dt = 1e-3;
    let results: Vec<(bool, bool)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let spec = desk_spec(16, 0.02, 64);
            let path = NoisePath::generate(100 + seed, dt, 40.0, t_end, &deltas).unwrap();
            let hist = random_history(&spec.phase, 16, &mut (seed.wrapping_mul(31) + 5));
            let u0 = hist.values.last().unwrap().clone();
            let rows = crate::attractor::wz_solution_gap(
                &spec, &path, &u0, &hist, &deltas, t_end, dt,
            )
            .unwrap();
            let monotone = rows.windows(2).all(|w| w[0].sup_gap > w[1].sup_gap);
            // Fit the comparison constant on the largest correlation time
            // and demand it covers the smaller ones (squared form).
            let c_fit = rows[0].sup_gap.powi(2) / (rows[0].eps * rows[0].energy_budget);
            let covered = rows[1..]
                .iter()
                .all(|r| r.sup_gap.powi(2) <= 1.5 * c_fit * r.eps * r.energy_budget);
            (monotone, covered)
        })
        .collect();
    let n_monotone = results.iter().filter(|r| r.0).count();
    let n_covered = results.iter().filter(|r| r.1).count();
    let pass = n_monotone >= 18 && n_covered >= 18;
    CheckOutcome::new(
        "C09",
        "Wong-Zakai solution gap",
        pass,
        format!("monotone on {n_monotone}/20 seeds, fitted pathwise bound holds on {n_covered}/20"),
    )
}

/// Criterion 10: Absorbing-radius convergence along the delta ladder, every seed.
pub fn c10_radius_convergence() -> CheckOutcome {
    let deltas = [0.1, 0.01, 0.001];
    let mut detail = String::new();
    let mut pass = true;
    for seed in 1u64..=5 {
        let spec = desk_spec(16, 0.02, 100);
        let path = NoisePath::generate(seed, 1e-3, 140.0, 1.0, &deltas).unwrap();
        let rho = absorbing_radius_sq(&spec, &path, NoiseMode::WhiteOu, 0.0).unwrap();
        let gaps: Vec<f64> = deltas
            .iter()
            .map(|&d| {
                (absorbing_radius_sq(&spec, &path, NoiseMode::Colored(d), 0.0).unwrap() - rho)
                    .abs()
            })
            .collect();
        if !(gaps[0] > gaps[1] && gaps[1] > gaps[2]) {
            pass = false;
        }
        detail.push_str(&format!(
            "seed {seed}: |rho_d^2 - rho^2| = [{:.3}, {:.3}, {:.3}]; ",
            gaps[0], gaps[1], gaps[2]
        ));
    }
    CheckOutcome::new("C10", "absorbing-radius convergence in delta", pass, detail)
}

/// Closed-form fixed point of the linear problem with exponential kernel.
///
/// Works in the transformed variables the solver integrates: per mode the
/// pair (v, memory) obeys a 2x2 linear system driven by the node-sampled
/// scalar process (z* or y_delta) and its kernel convolution, both treated
/// as piecewise linear between nodes, for which the variation-of-constants
/// step has a closed form. The colored and white oracles therefore converge
/// to each other exactly as their drivers do.
struct LinearOracle {
    lambda: f64,
    a_coeff: f64,
    d: f64,
}

impl LinearOracle {
    fn mat_exp(&self, t: f64) -> [f64; 4] {
        // exp(At) for A = [[-a lambda, -lambda], [1, -d]].
        let (a11, a12, a21, a22) = (-self.a_coeff * self.lambda, -self.lambda, 1.0, -self.d);
        let tr = a11 + a22;
        let det = a11 * a22 - a12 * a21;
        let disc = tr * tr / 4.0 - det;
        let (c0, c1);
        if disc >= 0.0 {
            let sq = disc.sqrt().max(1e-300);
            let (m1, m2) = (tr / 2.0 + sq, tr / 2.0 - sq);
            c1 = ((m1 * t).exp() - (m2 * t).exp()) / (m1 - m2);
            c0 = (m1 * (m2 * t).exp() - m2 * (m1 * t).exp()) / (m1 - m2);
        } else {
            let w = (-disc).sqrt();
            let ex = (tr / 2.0 * t).exp();
            c0 = ex * ((w * t).cos() - tr / 2.0 * (w * t).sin() / w);
            c1 = ex * (w * t).sin() / w;
        }
        [c0 + c1 * a11, c1 * a12, c1 * a21, c0 + c1 * a22]
    }

    /// v-trajectory at path nodes (the memory component is internal).
    /// `z` are node values of the driving process, `conv` the node values of
    /// its kernel convolution; forcing per node is
    /// `F(t) = -a z lambda phi + h + phi z - lambda phi conv` in the first
    /// component.
    fn v_trajectory(&self, h: f64, z: &[f64], conv: &[f64], forcing: f64, phi: f64) -> Vec<f64> {
        let e = self.mat_exp(h);
        let (a11, a12, a21, a22) = (-self.a_coeff * self.lambda, -self.lambda, 1.0, -self.d);
        let det = a11 * a22 - a12 * a21;
        let inv = [a22 / det, -a12 / det, -a21 / det, a11 / det];
        let mul = |m: &[f64; 4], x: (f64, f64)| (m[0] * x.0 + m[1] * x.1, m[2] * x.0 + m[3] * x.1);
        // M0 = int_0^h exp(A(h-u)) du = A^{-1}(exp(Ah) - I)
        let em1 = [e[0] - 1.0, e[1], e[2], e[3] - 1.0];
        let m0 = [
            inv[0] * em1[0] + inv[1] * em1[2],
            inv[0] * em1[1] + inv[1] * em1[3],
            inv[2] * em1[0] + inv[3] * em1[2],
            inv[2] * em1[1] + inv[3] * em1[3],
        ];
        // M1 = int_0^h exp(A(h-u)) u du = h M0 - A^{-1}(h exp(Ah) - M0)
        let m1 = {
            let hem = [h * e[0], h * e[1], h * e[2], h * e[3]];
            let diff = [hem[0] - m0[0], hem[1] - m0[1], hem[2] - m0[2], hem[3] - m0[3]];
            let ainv_diff = [
                inv[0] * diff[0] + inv[1] * diff[2],
                inv[0] * diff[1] + inv[1] * diff[3],
                inv[2] * diff[0] + inv[3] * diff[2],
                inv[2] * diff[1] + inv[3] * diff[3],
            ];
            [
                h * m0[0] - ainv_diff[0],
                h * m0[1] - ainv_diff[1],
                h * m0[2] - ainv_diff[2],
                h * m0[3] - ainv_diff[3],
            ]
        };
        let force = |i: usize| {
            (
                -self.a_coeff * z[i] * self.lambda * phi + forcing + phi * z[i]
                    - self.lambda * phi * conv[i],
                0.0,
            )
        };
        // Start at the fixed point of the initial forcing; the transient
        // decays over the long past span.
        let f0 = force(0);
        let start = mul(&inv, (-f0.0, -f0.1));
        let mut x = start;
        let mut out = Vec::with_capacity(z.len());
        out.push(x.0);
        for i in 0..z.len() - 1 {
            let fi = force(i);
            let fi1 = force(i + 1);
            let slope = ((fi1.0 - fi.0) / h, (fi1.1 - fi.1) / h);
            let ex = mul(&e, x);
            let c0 = mul(&m0, fi);
            let c1 = mul(&m1, slope);
            x = (ex.0 + c0.0 + c1.0, ex.1 + c0.1 + c1.1);
            out.push(x.0);
        }
        out
    }
}

/// Exact node values of `K(t) = int_0^inf k(s) q(t - s) ds` for the
/// exponential kernel `k = e^{-d t}` and piecewise-linear `q` (constant
/// prehistory before the first node): `K' = q - d K` in closed form per cell.
fn conv_recursion(d: f64, h: f64, q: &[f64]) -> Vec<f64> {
    let e = (-d * h).exp();
    let i1 = (1.0 - e) / d;
    let i2 = (1.0 - (1.0 + d * h) * e) / (d * d);
    let mut out = Vec::with_capacity(q.len());
    let mut k = q[0] / d;
    out.push(k);
    for i in 0..q.len() - 1 {
        let slope = (q[i + 1] - q[i]) / h;
        k = e * k + q[i] * i1 + slope * (h * i1 - i2);
        out.push(k);
    }
    out
}

/// Criterion 11: Upper semicontinuity: the linear closed-form oracle and the
/// nonlinear desk-scale cloud comparison.
pub fn c11_upper_semicontinuity() -> CheckOutcome {
    let mut detail = String::new();
    let mut pass = true;

    // (a) Linear case: attractors are single random points per mode.
    let deltas = [0.1, 0.01, 0.001];
    let n = 4usize;
    let d = 2.0;
    let out_phase = PhaseSpaceParams::new(GAMMA, 30.0, 601).unwrap();
    for seed in 1u64..=3 {
        let path = NoisePath::generate(seed, 1e-3, 160.0, 1.0, &deltas).unwrap();
        let basis = SpectralBasis::new(std::f64::consts::PI, n, 4 * n).unwrap();
        let kernel =
            MemoryKernel::new(KernelFamily::Exponential { d, c: d }, DEFAULT_TAIL_TOL).unwrap();
        let phi = Field::from_coeffs(vec![0.5, 0.0, 0.2, 0.0]);
        let forcing = Field::from_coeffs(vec![1.0, -0.5, 0.0, 0.3]);
        // History grid at the path resolution: segments then carry exact
        // node values of the rough driving process, as the oracle does.
        let spec = SystemSpec {
            phase: PhaseSpaceParams::with_resolution(GAMMA, 1e-3).unwrap(),
            diffusion: DiffusionSpec::new(DiffusionKind::Constant, 1.0, 1.0, Field::zeros(n))
                .unwrap(),
            nonlinearity: NonlinearitySpec::zero(2),
            phi: phi.clone(),
            forcing: forcing.clone(),
            kernel: Some(kernel),
            basis,
        };
        let lambdas = spec.basis.lambdas().to_vec();
        // Oracle fixed points with full history segments, per driving mode.
        let zero_idx = ((0.0 - path.t_start()) / path.h).round() as usize;
        let seg_nodes: Vec<usize> = out_phase
            .grid
            .nodes()
            .map(|r| (zero_idx as i64 + (r / path.h).round() as i64).max(0) as usize)
            .collect();
        let point_of = |mode: NoiseMode| -> CloudPoint {
            let z = crate::dynamics::noise_values(&path, mode).unwrap();
            let conv = conv_recursion(d, path.h, &z);
            let mut field = Field::zeros(n);
            let mut hist_vals = vec![Field::zeros(n); out_phase.grid.n];
            for j in 0..n {
                let oracle = LinearOracle { lambda: lambdas[j], a_coeff: 1.0, d };
                let v = oracle.v_trajectory(
                    path.h,
                    &z,
                    &conv,
                    forcing.coeffs[j],
                    phi.coeffs[j],
                );
                field.coeffs[j] = v[zero_idx] + phi.coeffs[j] * z[zero_idx];
                for (slot, &node) in seg_nodes.iter().enumerate() {
                    hist_vals[slot].coeffs[j] = v[node] + phi.coeffs[j] * z[node];
                }
            }
            CloudPoint { field, history: HistorySegment { values: hist_vals } }
        };
        let white_pt = point_of(NoiseMode::WhiteOu);
        let singleton = |p: CloudPoint| CloudX {
            phase: out_phase.clone(),
            points: vec![p],
            seed,
            pullback_time: 0.0,
            mode_tag: "oracle".into(),
        };
        let white_cloud = singleton(white_pt.clone());
        // Solver validation: a one-point pullback must land on the oracle.
        let cfg = EnsembleConfig { n_points: 1, n_history_perturbed: 0, radius: 0.0, seed };
        let ensemble = sample_ensemble(n, &lambdas, &out_phase, &cfg);
        let solver_cloud = pullback_cloud(
            &spec,
            &path,
            NoiseMode::WhiteOu,
            &ensemble,
            80.0,
            0.0,
            1e-3,
            &out_phase,
        )
        .unwrap();
        let solver_err = hausdorff_semidist(&solver_cloud, &white_cloud, &lambdas).unwrap();
        let scale = white_cloud.x_norm_sq(&white_pt, &lambdas).sqrt().max(1e-6);
        if solver_err > 0.02 * scale.max(1.0) {
            pass = false;
            detail.push_str(&format!("seed {seed}: solver-oracle gap {solver_err:.2e}; "));
        }
        let mut dists = Vec::new();
        for &delta in &deltas {
            let colored_pt = point_of(NoiseMode::Colored(delta));
            dists.push(hausdorff_semidist(&singleton(colored_pt), &white_cloud, &lambdas).unwrap());
        }
        let eps: Vec<f64> = (0..deltas.len()).map(|k| path.sup_gap(k, -40.0, 0.0)).collect();
        let monotone = dists.windows(2).all(|w| w[0] > w[1]);
        let ratio0 = dists[0] / eps[0];
        let rate_ok = dists
            .iter()
            .zip(&eps)
            .all(|(&dd, &ee)| dd <= 3.0 * ratio0 * ee && dd >= ratio0 * ee / 3.0);
        if !monotone || !rate_ok {
            pass = false;
        }
        detail.push_str(&format!(
            "seed {seed}: oracle dists [{:.3e}, {:.3e}, {:.3e}] vs eps [{:.2e}, {:.2e}, {:.2e}]; ",
            dists[0], dists[1], dists[2], eps[0], eps[1], eps[2]
        ));
    }

    // (b) Nonlinear desk case: colored cloud within 3x the white resolution
    // floor at the smallest correlation time. The noise amplitude is chosen
    // so the colored offset sits at the scale the 64-point ball-drawn clouds
    // can resolve.
    let ladder: Vec<f64> = [5.0, 10.0, 20.0, 40.0].iter().map(|t| t / GAMMA).collect();
    let out_phase_nl = PhaseSpaceParams::with_resolution(GAMMA, 0.05).unwrap();
    for seed in 1u64..=2 {
        let mut spec = desk_spec(16, 0.02, 32);
        spec.phi = {
            let mut p = Field::zeros(16);
            p.coeffs[0] = 0.1;
            p.coeffs[2] = 0.05;
            p
        };
        spec.forcing = {
            let mut f = Field::zeros(16);
            f.coeffs[0] = 0.4;
            f.coeffs[1] = -0.2;
            f
        };
        let t_past = ladder[3] + 40.0 / GAMMA + 15.0;
        let path = NoisePath::generate(seed, 1e-3, t_past, 1.0, &[1e-3]).unwrap();
        let cfg = EnsembleConfig::new(1.0, seed);
        let report = usc_experiment(
            &spec,
            &path,
            &ladder,
            &[1e-3],
            &cfg,
            4e-3,
            &out_phase_nl,
        );
        match report {
            Ok(rep) => {
                let (delta, dist) = rep.rows[0];
                let ok = rep.converged && dist <= 3.0 * rep.floor.max(1e-12);
                if !ok {
                    pass = false;
                }
                detail.push_str(&format!(
                    "seed {seed}: floor {:.3e}, dist(delta={delta}) {:.3e}, cauchy {:?}; ",
                    rep.floor, dist, rep.cauchy
                ));
            }
            Err(e) => {
                pass = false;
                detail.push_str(&format!("seed {seed}: {e}; "));
            }
        }
    }
    CheckOutcome::new("C11", "upper semicontinuity of attractors", pass, detail)
}

/// Independently coded deterministic solver (same discretization, flat
/// arrays, no shared machinery beyond the scheme's published formulas).
mod independent {
    pub struct Params {
        pub n: usize,
        pub l: f64,
        pub dt: f64,
        pub m_samples: usize,
        pub coeffs_lead_first: Vec<f64>,
        pub a_m: f64,
        pub a_up: f64,
        pub ell: Vec<f64>,
        pub forcing: Vec<f64>,
        pub kernel_d: f64,
        pub kernel_c: f64,
        pub kernel_cells: usize,
        pub tail_tol: f64,
    }

    pub fn run(p: &Params, v0: &[f64], n_steps: usize) -> Vec<f64> {
        let n = p.n;
        let lambdas: Vec<f64> = (1..=n)
            .map(|j| (j as f64 * std::f64::consts::PI / p.l).powi(2))
            .collect();
        // Full-period sampling and exact projection tables.
        let m = p.m_samples;
        let norm = (2.0 / p.l).sqrt();
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut sin_t = vec![0.0; m * n];
        for i in 0..m {
            let th = two_pi * i as f64 / m as f64;
            for j in 0..n {
                sin_t[i * n + j] = norm * ((j + 1) as f64 * th).sin();
            }
        }
        let d_max = (m - 1) / 2;
        let mut proj = vec![0.0; n * m];
        let front = p.l / std::f64::consts::PI * norm;
        for j0 in 0..n {
            let j = (j0 + 1) as f64;
            let m0 = (1.0 - (-1.0f64).powi(j0 as i32 + 1)) / j;
            for i in 0..m {
                let th = two_pi * i as f64 / m as f64;
                let mut acc = m0 / m as f64;
                for dd in 1..=d_max {
                    if dd != j0 + 1 {
                        let par = 1.0 - (-1.0f64).powi((dd + j0 + 1) as i32);
                        acc += 2.0 / m as f64 * (dd as f64 * th).cos() * j * par
                            / (j * j - (dd * dd) as f64);
                    }
                }
                acc += 2.0 / m as f64 * (j * th).sin() * (std::f64::consts::PI / 2.0);
                proj[j0 * m + i] = front * acc;
            }
        }
        // Graded Gauss kernel grid.
        let mu1 = p.kernel_c * (-p.kernel_d).exp();
        let m1 = p.kernel_c / p.kernel_d;
        let s_cut = (1.0f64)
            .max(((mu1 * p.kernel_d.exp()) / (p.kernel_d * p.tail_tol * m1)).ln() / p.kernel_d);
        let off = 0.5 / 3.0f64.sqrt();
        let mut s_nodes = Vec::new();
        let mut s_weights = Vec::new();
        for c in 0..p.kernel_cells {
            let a = s_cut * c as f64 / p.kernel_cells as f64;
            let b = s_cut * (c + 1) as f64 / p.kernel_cells as f64;
            let h = b - a;
            let mid = 0.5 * (a + b);
            s_nodes.push(mid - off * h);
            s_nodes.push(mid + off * h);
            s_weights.push(0.5 * h);
            s_weights.push(0.5 * h);
        }
        let mu: Vec<f64> = s_nodes.iter().map(|&s| p.kernel_c * (-p.kernel_d * s).exp()).collect();

        let f_eval = |u: f64| {
            let mut acc = 0.0;
            for &c in &p.coeffs_lead_first {
                acc = acc * u + c;
            }
            acc
        };
        let deg = p.coeffs_lead_first.len() - 1;
        let f_deriv = |u: f64| {
            let mut acc = 0.0;
            for (i, &c) in p.coeffs_lead_first.iter().enumerate().take(deg) {
                acc = acc * u + c * (deg - i) as f64;
            }
            acc
        };
        let a_of = |v: &[f64]| {
            let r: f64 = p.ell.iter().zip(v).map(|(e, b)| e * b).sum();
            p.a_m + (p.a_up - p.a_m) / (1.0 + r * r)
        };
        let sample = |v: &[f64]| -> Vec<f64> {
            (0..m)
                .map(|i| sin_t[i * n..(i + 1) * n].iter().zip(v).map(|(s, b)| s * b).sum())
                .collect()
        };
        let project = |g: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|j| proj[j * m..(j + 1) * m].iter().zip(g).map(|(w, s)| w * s).sum())
                .collect()
        };
        let reaction_half = |v: &[f64], dt: f64| -> Vec<f64> {
            let h = 0.5 * dt;
            let mut g = sample(v);
            for s in &mut g {
                let s0 = *s;
                let mut w = s0;
                for _ in 0..100 {
                    let gg = w - s0 + h * f_eval(w);
                    let gp = 1.0 + h * f_deriv(w);
                    let delta = gg / gp;
                    w -= delta;
                    if delta.abs() <= 1e-14 * (1.0 + w.abs()) {
                        break;
                    }
                }
                *s = w;
            }
            project(&g)
        };

        let mut states: Vec<Vec<f64>> = vec![v0.to_vec()];
        let mut cum: Vec<Vec<f64>> = vec![vec![0.0; n]];
        let memory = |states: &[Vec<f64>], cum: &[Vec<f64>], t: f64| -> Vec<f64> {
            let a_end = cum.last().unwrap();
            let mut acc = vec![0.0; n];
            for (k, (&s, &w)) in s_nodes.iter().zip(&s_weights).enumerate() {
                let wm = w * mu[k];
                let tl = (t - s).max(0.0);
                let pos = tl / p.dt;
                let i = (pos.floor() as usize).min(cum.len() - 1);
                let frac = (pos - i as f64).clamp(0.0, 1.0);
                for j in 0..n {
                    let at = if i + 1 < cum.len() {
                        cum[i][j] * (1.0 - frac) + cum[i + 1][j] * frac
                    } else {
                        cum[i][j]
                    };
                    acc[j] += wm * (a_end[j] - at);
                }
            }
            let _ = states;
            for j in 0..n {
                acc[j] *= -lambdas[j];
            }
            acc
        };
        let explicit = |states: &[Vec<f64>], cum: &[Vec<f64>], v: &[f64], t: f64| -> (Vec<f64>, f64) {
            let a = a_of(v);
            let mem = memory(states, cum, t);
            let e: Vec<f64> = (0..n).map(|j| mem[j] + p.forcing[j]).collect();
            (e, a)
        };
        for k in 0..n_steps {
            let t = k as f64 * p.dt;
            let v_star = reaction_half(states.last().unwrap(), p.dt);
            let (e_k, a_k) = explicit(&states, &cum, &v_star, t);
            let mut pred = vec![0.0; n];
            for j in 0..n {
                pred[j] = (v_star[j] + p.dt * e_k[j]) / (1.0 + p.dt * a_k * lambdas[j]);
            }
            // tentative push
            let mut a_new = cum.last().unwrap().clone();
            for j in 0..n {
                a_new[j] += 0.5 * p.dt * (states.last().unwrap()[j] + pred[j]);
            }
            states.push(pred.clone());
            cum.push(a_new);
            let (e_p, a_p) = explicit(&states, &cum, &pred, t + p.dt);
            states.pop();
            cum.pop();
            let a_bar = 0.5 * (a_k + a_p);
            let mut v_mid = vec![0.0; n];
            for j in 0..n {
                let rhs = (1.0 - 0.5 * p.dt * a_bar * lambdas[j]) * v_star[j]
                    + 0.5 * p.dt * (e_k[j] + e_p[j]);
                v_mid[j] = rhs / (1.0 + 0.5 * p.dt * a_bar * lambdas[j]);
            }
            let v_new = reaction_half(&v_mid, p.dt);
            let mut a_new = cum.last().unwrap().clone();
            for j in 0..n {
                a_new[j] += 0.5 * p.dt * (states.last().unwrap()[j] + v_new[j]);
            }
            states.push(v_new);
            cum.push(a_new);
        }
        states.pop().unwrap()
    }
}

/// Criterion 12: Deterministic case: agreement with the independently coded solver and
/// the two linear cloud collapses.
pub fn c12_deterministic_case() -> CheckOutcome {
    let mut detail = String::new();
    let mut pass = true;

    // (a) Independent re-implementation, same discretization, zero history.
    let n = 8;
    let dt = 1e-3;
    let n_steps = 2000;
    let spec = desk_spec(n, 0.02, 100);
    let driver = Driver::deterministic(&spec, 0.0, n_steps, dt);
    let hist = HistorySegment::zeros(&spec.phase, n);
    let v0: Vec<f64> = (0..n).map(|j| 0.4 * (-(j as f64)).exp()).collect();
    let run = evolve_psi(&spec, &driver, Field::from_coeffs(v0.clone()), &hist, false).unwrap();
    let params = independent::Params {
        n,
        l: std::f64::consts::PI,
        dt,
        m_samples: 2 * 2 * 2 * n + 1,
        coeffs_lead_first: vec![1.0, 0.0, -1.0, 0.0],
        a_m: 1.0,
        a_up: 2.0,
        ell: {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        },
        forcing: spec.forcing.coeffs.clone(),
        kernel_d: 2.0,
        kernel_c: 2.0,
        kernel_cells: 100,
        tail_tol: DEFAULT_TAIL_TOL,
    };
    let indep = independent::run(&params, &v0, n_steps);
    let mut worst: f64 = 0.0;
    for j in 0..n {
        worst = worst.max((run.state.v().coeffs[j] - indep[j]).abs());
    }
    if worst > 1e-12 {
        pass = false;
    }
    detail.push_str(&format!("independent-solver gap {worst:.2e} (<=1e-12); "));

    // (b) Linear decay collapse at the energy rate.
    {
        let kernel =
            MemoryKernel::new(KernelFamily::Exponential { d: 2.0, c: 2.0 }, DEFAULT_TAIL_TOL)
                .unwrap();
        let basis = SpectralBasis::new(std::f64::consts::PI, 4, 16).unwrap();
        let lin = SystemSpec {
            phase: PhaseSpaceParams::with_resolution(GAMMA, 0.02).unwrap(),
            diffusion: DiffusionSpec::new(DiffusionKind::Constant, 1.0, 1.0, Field::zeros(4))
                .unwrap(),
            nonlinearity: NonlinearitySpec::zero(2),
            phi: Field::zeros(4),
            forcing: Field::zeros(4),
            kernel: Some(kernel),
            basis,
        };
        let path = NoisePath::generate(1, 0.01, 1.0, 1.0, &[]).unwrap();
        let out_phase = PhaseSpaceParams::new(GAMMA, 20.0, 401).unwrap();
        let cfg = EnsembleConfig { n_points: 12, n_history_perturbed: 4, radius: 2.0, seed: 3 };
        let ensemble = sample_ensemble(4, lin.basis.lambdas(), &out_phase, &cfg);
        let t = 3.0;
        let cloud =
            pullback_cloud(&lin, &path, NoiseMode::Off, &ensemble, t, 0.0, 1e-3, &out_phase)
                .unwrap();
        let kmu = lin.kernel.as_ref().unwrap().kmu_constant(GAMMA).unwrap();
        let init_diam = ((2.0 * cfg.radius).powi(2) * (1.0 + kmu)).sqrt();
        let rate = lin.diffusion.m * lin.basis.lambda1();
        let bound = init_diam * (-rate * t).exp() * 1.05;
        let mut diam: f64 = 0.0;
        for a in &cloud.points {
            for b in &cloud.points {
                diam = diam.max(a.field.sub(&b.field).h_norm_sq().sqrt());
            }
        }
        if diam > bound {
            pass = false;
        }
        detail.push_str(&format!("linear collapse diameter {diam:.2e} <= {bound:.2e}; "));
    }

    // (c) Fixed-point collapse without memory.
    {
        let basis = SpectralBasis::new(std::f64::consts::PI, 3, 12).unwrap();
        let h = Field::from_coeffs(vec![1.0, -0.6, 0.3]);
        let fx = SystemSpec {
            phase: PhaseSpaceParams::with_resolution(GAMMA, 0.02).unwrap(),
            diffusion: DiffusionSpec::new(DiffusionKind::Constant, 1.0, 1.0, Field::zeros(3))
                .unwrap(),
            nonlinearity: NonlinearitySpec::zero(2),
            phi: Field::zeros(3),
            forcing: h.clone(),
            kernel: None,
            basis,
        };
        let path = NoisePath::generate(1, 0.01, 1.0, 1.0, &[]).unwrap();
        let out_phase = PhaseSpaceParams::new(GAMMA, 20.0, 401).unwrap();
        let cfg = EnsembleConfig { n_points: 8, n_history_perturbed: 2, radius: 3.0, seed: 5 };
        let ensemble = sample_ensemble(3, fx.basis.lambdas(), &out_phase, &cfg);
        let cloud =
            pullback_cloud(&fx, &path, NoiseMode::Off, &ensemble, 25.0, 0.0, 1e-3, &out_phase)
                .unwrap();
        let mut worst_fp: f64 = 0.0;
        for p in &cloud.points {
            for j in 0..3 {
                let want = h.coeffs[j] / fx.basis.lambdas()[j];
                worst_fp = worst_fp.max((p.field.coeffs[j] - want).abs());
            }
        }
        if worst_fp > 1e-6 {
            pass = false;
        }
        detail.push_str(&format!("fixed-point gap {worst_fp:.2e} (<=1e-6)"));
    }

    CheckOutcome::new("C12", "deterministic reduction and cloud collapses", pass, detail)
}
