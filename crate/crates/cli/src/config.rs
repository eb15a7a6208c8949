//! Run configuration: a single key-value text file is the experiment
//! manifest. Parsing validates every structural hypothesis eagerly, and a
//! parsed configuration re-serializes to a canonical form byte-for-byte
//! stable under round trips.

use std::fmt::Write as _;
use std::path::PathBuf;

use memoir_core::kernel::KernelFamily;
use memoir_core::spectral::DiffusionKind;
use memoir_core::{CoreError, Field, NonlinearitySpec, PhaseSpaceParams, Result, SpectralBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Simulate,
    Verify,
    WongZakai,
    Attractor,
    Usc,
    KernelCheck,
}

impl Experiment {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Experiment::Simulate,
            "verify" => Experiment::Verify,
            "wong-zakai" => Experiment::WongZakai,
            "attractor" => Experiment::Attractor,
            "usc" => Experiment::Usc,
            "kernel-check" => Experiment::KernelCheck,
            other => {
                return Err(CoreError::InvalidParameter(format!(
                    "unknown experiment '{other}' (expected simulate|verify|wong-zakai|attractor|usc|kernel-check)"
                )))
            }
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Verify => "verify",
            Experiment::WongZakai => "wong-zakai",
            Experiment::Attractor => "attractor",
            Experiment::Usc => "usc",
            Experiment::KernelCheck => "kernel-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub kernel: KernelFamily,
    pub modes: usize,
    pub collocation: usize,
    pub length: f64,
    pub dt: f64,
    pub horizon: f64,
    /// None means "auto": 0.9 * min(m lambda_1 / 2, varpi).
    pub gamma: Option<f64>,
    pub p: u32,
    /// Leading-first coefficients, length 2p.
    pub f_coeffs: Vec<f64>,
    pub a_kind: DiffusionKind,
    pub a_m: f64,
    pub a_up: f64,
    pub ell: Vec<f64>,
    pub phi: Vec<f64>,
    pub h: Vec<f64>,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub ensemble: usize,
    /// None means "auto": {5, 10, 20, 40} / gamma.
    pub pullback_times: Option<Vec<f64>>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: Experiment::Simulate,
            kernel: KernelFamily::Exponential { d: 2.0, c: 2.0 },
            modes: 16,
            collocation: 64,
            length: std::f64::consts::PI,
            dt: 1e-3,
            horizon: 10.0,
            gamma: None,
            p: 2,
            f_coeffs: vec![1.0, 0.0, -1.0, 0.0],
            a_kind: DiffusionKind::Rational,
            a_m: 1.0,
            a_up: 2.0,
            ell: vec![1.0],
            phi: vec![0.4, 0.0, 0.2],
            h: vec![1.0, -0.5],
            deltas: vec![0.1, 0.01, 0.001],
            seeds: vec![1, 2, 3, 4, 5],
            ensemble: 64,
            pullback_times: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_kernel(s: &str) -> Result<KernelFamily> {
    let bad = || CoreError::InvalidParameter(format!("bad kernel id '{s}' (expected exp(d,c) or gamma(d,a,c))"));
    let (name, rest) = s.split_once('(').ok_or_else(bad)?;
    let inner = rest.strip_suffix(')').ok_or_else(bad)?;
    let nums: Vec<f64> = inner
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match (name.trim(), nums.as_slice()) {
        ("exp", [d, c]) => Ok(KernelFamily::Exponential { d: *d, c: *c }),
        ("gamma", [d, a, c]) => Ok(KernelFamily::GammaSingular { d: *d, a: *a, c: *c }),
        _ => Err(bad()),
    }
}

fn kernel_id(k: &KernelFamily) -> String {
    k.id()
}

fn parse_list_f64(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| CoreError::InvalidParameter(format!("bad number '{x}'")))
        })
        .collect()
}

fn parse_list_u64(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<u64>()
                .map_err(|_| CoreError::InvalidParameter(format!("bad seed '{x}'")))
        })
        .collect()
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CoreError::InvalidParameter(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let parse_f64 = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|_| CoreError::InvalidParameter(format!("{key}: bad number '{v}'")))
            };
            match key {
                "experiment" => cfg.experiment = Experiment::parse(value)?,
                "kernel" => cfg.kernel = parse_kernel(value)?,
                "modes" => {
                    cfg.modes = value.parse().map_err(|_| {
                        CoreError::InvalidParameter(format!("modes: bad integer '{value}'"))
                    })?
                }
                "collocation" => {
                    cfg.collocation = value.parse().map_err(|_| {
                        CoreError::InvalidParameter(format!("collocation: bad integer '{value}'"))
                    })?
                }
                "length" => cfg.length = parse_f64(value)?,
                "dt" => cfg.dt = parse_f64(value)?,
                "horizon" => cfg.horizon = parse_f64(value)?,
                "gamma" => {
                    cfg.gamma = if value == "auto" { None } else { Some(parse_f64(value)?) }
                }
                "p" => {
                    cfg.p = value.parse().map_err(|_| {
                        CoreError::InvalidParameter(format!("p: bad integer '{value}'"))
                    })?
                }
                "f_coeffs" => cfg.f_coeffs = parse_list_f64(value)?,
                "a_kind" => cfg.a_kind = DiffusionKind::parse(value)?,
                "a_m" => cfg.a_m = parse_f64(value)?,
                "a_M" => cfg.a_up = parse_f64(value)?,
                "ell" => cfg.ell = parse_list_f64(value)?,
                "phi" => cfg.phi = parse_list_f64(value)?,
                "h" => cfg.h = parse_list_f64(value)?,
                "deltas" => cfg.deltas = parse_list_f64(value)?,
                "seeds" => cfg.seeds = parse_list_u64(value)?,
                "ensemble" => {
                    cfg.ensemble = value.parse().map_err(|_| {
                        CoreError::InvalidParameter(format!("ensemble: bad integer '{value}'"))
                    })?
                }
                "pullback_times" => {
                    cfg.pullback_times =
                        if value == "auto" { None } else { Some(parse_list_f64(value)?) }
                }
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                other => {
                    return Err(CoreError::InvalidParameter(format!(
                        "unknown configuration key '{other}'"
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Eager hypothesis checks; every violation names the violated condition.
    pub fn validate(&self) -> Result<()> {
        let kernel = memoir_core::MemoryKernel::new(self.kernel, 1e-8)?;
        let basis = SpectralBasis::new(self.length, self.modes, self.collocation)?;
        if self.dt <= 0.0 || self.horizon < 0.0 {
            return Err(CoreError::InvalidParameter("dt must be > 0 and horizon >= 0".into()));
        }
        if self.a_m <= 0.0 || self.a_up < self.a_m {
            return Err(CoreError::Hypothesis(format!(
                "diffusion bounds must satisfy 0 < m <= M (got m={}, M={})",
                self.a_m, self.a_up
            )));
        }
        // Nonlinearity: polynomial of odd degree with positive leading
        // coefficient (the all-zero polynomial selects the linear problem).
        if self.f_coeffs.iter().any(|c| *c != 0.0) {
            NonlinearitySpec::new(self.p, self.f_coeffs.clone())?;
        }
        let gamma = self.resolved_gamma();
        PhaseSpaceParams::validate_gamma(gamma, self.a_m, basis.lambda1(), kernel.varpi)?;
        for &d in &self.deltas {
            if !(d > 0.0 && d <= 1.0) {
                return Err(CoreError::Hypothesis(format!(
                    "correlation time delta={d} must lie in (0, 1]"
                )));
            }
        }
        if self.seeds.is_empty() {
            return Err(CoreError::InvalidParameter("at least one seed required".into()));
        }
        if self.modes < self.ell.len() || self.modes < self.phi.len() || self.modes < self.h.len()
        {
            return Err(CoreError::InvalidParameter(
                "ell/phi/h must not carry more coefficients than modes".into(),
            ));
        }
        Ok(())
    }

    pub fn resolved_gamma(&self) -> f64 {
        match self.gamma {
            Some(g) => g,
            None => {
                let lambda1 = (std::f64::consts::PI / self.length).powi(2);
                let varpi = match self.kernel {
                    KernelFamily::Exponential { d, .. } => d,
                    KernelFamily::GammaSingular { d, .. } => d,
                };
                0.9 * (0.5 * self.a_m * lambda1).min(varpi)
            }
        }
    }

    pub fn resolved_pullback_times(&self) -> Vec<f64> {
        match &self.pullback_times {
            Some(t) => t.clone(),
            None => {
                let gamma = self.resolved_gamma();
                [5.0, 10.0, 20.0, 40.0].iter().map(|t| t / gamma).collect()
            }
        }
    }

    fn padded(&self, v: &[f64]) -> Field {
        let mut f = Field::zeros(self.modes);
        for (i, &x) in v.iter().enumerate() {
            f.coeffs[i] = x;
        }
        f
    }

    pub fn ell_field(&self) -> Field {
        self.padded(&self.ell)
    }

    pub fn phi_field(&self) -> Field {
        self.padded(&self.phi)
    }

    pub fn h_field(&self) -> Field {
        self.padded(&self.h)
    }

    pub fn nonlinearity(&self) -> Result<NonlinearitySpec> {
        if self.f_coeffs.iter().all(|c| *c == 0.0) {
            Ok(NonlinearitySpec::zero(self.p))
        } else {
            NonlinearitySpec::new(self.p, self.f_coeffs.clone())
        }
    }

    /// Canonical serialization: fixed key order, shortest round-trip floats.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment = {}", self.experiment.id());
        let _ = writeln!(out, "kernel = {}", kernel_id(&self.kernel));
        let _ = writeln!(out, "modes = {}", self.modes);
        let _ = writeln!(out, "collocation = {}", self.collocation);
        let _ = writeln!(out, "length = {}", self.length);
        let _ = writeln!(out, "dt = {}", self.dt);
        let _ = writeln!(out, "horizon = {}", self.horizon);
        match self.gamma {
            Some(g) => {
                let _ = writeln!(out, "gamma = {g}");
            }
            None => {
                let _ = writeln!(out, "gamma = auto");
            }
        }
        let _ = writeln!(out, "p = {}", self.p);
        let _ = writeln!(out, "f_coeffs = {}", join_f64(&self.f_coeffs));
        let _ = writeln!(out, "a_kind = {}", self.a_kind.id());
        let _ = writeln!(out, "a_m = {}", self.a_m);
        let _ = writeln!(out, "a_M = {}", self.a_up);
        let _ = writeln!(out, "ell = {}", join_f64(&self.ell));
        let _ = writeln!(out, "phi = {}", join_f64(&self.phi));
        let _ = writeln!(out, "h = {}", join_f64(&self.h));
        let _ = writeln!(out, "deltas = {}", join_f64(&self.deltas));
        let _ = writeln!(
            out,
            "seeds = {}",
            self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(out, "ensemble = {}", self.ensemble);
        match &self.pullback_times {
            Some(t) => {
                let _ = writeln!(out, "pullback_times = {}", join_f64(t));
            }
            None => {
                let _ = writeln!(out, "pullback_times = auto");
            }
        }
        let _ = writeln!(out, "out_dir = {}", self.out_dir.display());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_populates_defaults() {
        let cfg = RunConfig::parse("experiment = verify\n").unwrap();
        assert_eq!(cfg.experiment, Experiment::Verify);
        assert_eq!(cfg.modes, 16);
        assert_eq!(cfg.seeds, vec![1, 2, 3, 4, 5]);
        assert!(cfg.canonical().contains("kernel = exp(2,2)"));
    }

    #[test]
    fn auto_gamma_matches_hand_value() {
        // m = 1, L = pi (lambda_1 = 1), varpi = 2: 0.9 * min(0.5, 2) = 0.45.
        let cfg = RunConfig::parse("a_m = 1\nlength = 3.14159265358979312\nkernel = exp(2,1)\n")
            .unwrap();
        assert!((cfg.resolved_gamma() - 0.45).abs() < 1e-12);
    }

    #[test]
    fn even_degree_polynomial_is_rejected() {
        let err = RunConfig::parse("p = 2\nf_coeffs = 1,0,0\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("odd degree"), "message was: {msg}");
    }

    #[test]
    fn nonpositive_leading_coefficient_is_rejected() {
        let err = RunConfig::parse("p = 2\nf_coeffs = -1,0,0,0\n").unwrap_err();
        assert!(format!("{err}").contains("positive leading"));
    }

    #[test]
    fn canonical_form_is_a_fixpoint() {
        let text = "experiment = wong-zakai\nkernel = gamma(1,0.5,1)\nmodes = 8\ncollocation = 32\n\
                    deltas = 0.1,0.003\nseeds = 7\ngamma = 0.3\n";
        let cfg = RunConfig::parse(text).unwrap();
        let canon = cfg.canonical();
        let reparsed = RunConfig::parse(&canon).unwrap();
        assert_eq!(cfg, reparsed);
        assert_eq!(canon, reparsed.canonical());
    }

    #[test]
    fn gamma_window_violation_names_the_window() {
        let err = RunConfig::parse("gamma = 5.0\n").unwrap_err();
        assert!(format!("{err}").contains("strictly inside"));
    }
}
