//! Small Gaussian algebra used for marginals and analytic integrals.

use std::f64::consts::PI;

/// ∫ exp(−p·x² + q·x + r) dx over the real line, for p > 0.
pub fn integral_1d(p: f64, q: f64, r: f64) -> f64 {
    (PI / p).sqrt() * (q * q / (4.0 * p) + r).exp()
}

/// Natural log of [`integral_1d`], safe against overflow.
pub fn ln_integral_1d(p: f64, q: f64, r: f64) -> f64 {
    0.5 * (PI / p).ln() + q * q / (4.0 * p) + r
}

/// Log-density exp(−(xᵀAx − 2bᵀx)) in two variables, accumulated term by term.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Gaussian2 {
    a: [[f64; 2]; 2],
    b: [f64; 2],
}

impl Gaussian2 {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the factor exp(−weight·(u·x − shift)²).
    pub fn with_term(mut self, weight: f64, u: [f64; 2], shift: f64) -> Self {
        for i in 0..2 {
            for j in 0..2 {
                self.a[i][j] += weight * u[i] * u[j];
            }
            self.b[i] += weight * shift * u[i];
        }
        self
    }

    pub fn determinant(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    fn inverse(&self) -> Option<[[f64; 2]; 2]> {
        let det = self.determinant();
        let scale = self.a[0][0].abs().max(self.a[1][1].abs());
        if !(det > 1e-14 * scale * scale) {
            return None;
        }
        Some([
            [self.a[1][1] / det, -self.a[0][1] / det],
            [-self.a[1][0] / det, self.a[0][0] / det],
        ])
    }

    /// Mean A⁻¹b, or `None` when the form is not positive definite.
    pub fn mean(&self) -> Option<[f64; 2]> {
        let inv = self.inverse()?;
        Some([
            inv[0][0] * self.b[0] + inv[0][1] * self.b[1],
            inv[1][0] * self.b[0] + inv[1][1] * self.b[1],
        ])
    }

    /// Covariance A⁻¹/2 of the normalised density.
    pub fn covariance(&self) -> Option<[[f64; 2]; 2]> {
        let inv = self.inverse()?;
        Some([[inv[0][0] / 2.0, inv[0][1] / 2.0], [inv[1][0] / 2.0, inv[1][1] / 2.0]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integral_matches_trapezoid() {
        let (p, q, r) = (2.3, 0.7, -0.1);
        let n = 20_001;
        let h = 20.0 / (n - 1) as f64;
        let sum: f64 = (0..n)
            .map(|k| {
                let x = -10.0 + k as f64 * h;
                let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                w * (-p * x * x + q * x + r).exp()
            })
            .sum::<f64>()
            * h;
        assert_relative_eq!(integral_1d(p, q, r), sum, max_relative = 1e-12);
    }

    #[test]
    fn separable_form() {
        // exp(-(x-1)²/2) exp(-(y+2)²/8): means (1,-2), variances 1 and 4
        let g = Gaussian2::new()
            .with_term(0.5, [1.0, 0.0], 1.0)
            .with_term(0.125, [0.0, 1.0], -2.0);
        let m = g.mean().unwrap();
        let c = g.covariance().unwrap();
        assert_relative_eq!(m[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(m[1], -2.0, epsilon = 1e-14);
        assert_relative_eq!(c[0][0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(c[1][1], 4.0, epsilon = 1e-14);
        assert_relative_eq!(c[0][1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rank_deficient_form_has_no_mean() {
        let g = Gaussian2::new().with_term(1.0, [1.0, 1.0], 0.0);
        assert!(g.mean().is_none());
    }
}
