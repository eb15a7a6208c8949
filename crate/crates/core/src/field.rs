/// Modal coefficient vector of a function on the interval, expressed in the
/// Dirichlet sine eigenbasis. Index `j` holds the coefficient of the
/// `j+1`-th eigenfunction.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub coeffs: Vec<f64>,
}

impl Field {
    pub fn zeros(n: usize) -> Self {
        Field {
            coeffs: vec![0.0; n],
        }
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        Field { coeffs }
    }

    /// Single nonzero coefficient `value` in mode `j` (zero-based).
    pub fn mode(n: usize, j: usize, value: f64) -> Self {
        let mut coeffs = vec![0.0; n];
        coeffs[j] = value;
        Field { coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// L2 norm squared, |u|^2 = sum b_j^2 (Parseval).
    pub fn h_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|b| b * b).sum()
    }

    /// H1_0 seminorm squared, ||u||^2 = sum lambda_j b_j^2.
    pub fn v_norm_sq(&self, lambdas: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(lambdas)
            .map(|(b, l)| l * b * b)
            .sum()
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for b in &mut self.coeffs {
            *b *= factor;
        }
    }

    pub fn scaled(&self, factor: f64) -> Field {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    /// self += factor * other
    pub fn add_scaled(&mut self, factor: f64, other: &Field) {
        for (b, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *b += factor * o;
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.add_scaled(1.0, other);
        out
    }

    pub fn sub(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }
}
