//! Quadrature grids shared by the kernel and history machinery: graded
//! meshes with two-point Gauss cells for weakly singular integrands, and
//! uniform trapezoid grids for history functions.

/// Cell boundaries `s_i = s_end * (i/n)^q` on `(0, s_end]`, geometrically
/// refined toward zero for `q > 1`.
pub fn graded_boundaries(s_end: f64, n_cells: usize, q: f64) -> Vec<f64> {
    (0..=n_cells)
        .map(|i| s_end * (i as f64 / n_cells as f64).powf(q))
        .collect()
}

/// Composite two-point Gauss rule on a list of cell boundaries. Nodes never
/// touch the cell endpoints, so integrands singular at the left boundary are
/// evaluated only at interior points.
#[derive(Debug, Clone)]
pub struct Gl2Grid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Gl2Grid {
    pub fn from_boundaries(bounds: &[f64]) -> Self {
        let offset = 0.5 / 3.0_f64.sqrt();
        let mut nodes = Vec::with_capacity(2 * (bounds.len() - 1));
        let mut weights = Vec::with_capacity(2 * (bounds.len() - 1));
        for w in bounds.windows(2) {
            let (a, b) = (w[0], w[1]);
            let h = b - a;
            let mid = 0.5 * (a + b);
            nodes.push(mid - offset * h);
            nodes.push(mid + offset * h);
            weights.push(0.5 * h);
            weights.push(0.5 * h);
        }
        Gl2Grid { nodes, weights }
    }

    pub fn graded(s_end: f64, n_cells: usize, q: f64) -> Self {
        Self::from_boundaries(&graded_boundaries(s_end, n_cells, q))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * f(s))
            .sum()
    }
}

/// Uniform grid with trapezoid weights, used for history functions on
/// `[start, start + step*(n-1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, n: usize) -> Self {
        assert!(n >= 2, "uniform grid needs at least two nodes");
        UniformGrid { start, step, n }
    }

    pub fn node(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn end(&self) -> f64 {
        self.node(self.n - 1)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n - 1 {
            0.5 * self.step
        } else {
            self.step
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        (0..self.n).map(|i| self.weight(i) * f(self.node(i))).sum()
    }

    /// Linear interpolation of nodal values at `x`, clamped to the grid span.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        let pos = (x - self.start) / self.step;
        if pos <= 0.0 {
            return values[0];
        }
        let last = (self.n - 1) as f64;
        if pos >= last {
            return values[self.n - 1];
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }
}

/// Adaptive Simpson integration; used as an independent oracle in tests and
/// for one-off constants where no structured grid exists.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
        force: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        // The forced levels guard against integrands whose zeros line up
        // with the first sample points (oscillatory projections).
        if depth == 0 || (force == 0 && delta.abs() <= 15.0 * tol) {
            left + right + delta / 15.0
        } else {
            let nf = force.saturating_sub(1);
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1, nf)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1, nf)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48, 10)
}
