//! Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems with
//! box constraints enforced by projection.

use nalgebra::{DMatrix, DVector};

/// A weighted least-squares problem: minimise ½·Σ rₖ(p)².
pub(crate) trait Problem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// Fills weighted residuals and the row-major Jacobian ∂rₖ/∂pⱼ.
    fn evaluate(&self, p: &[f64], residuals: &mut [f64], jacobian: &mut [f64]);
    /// Clamps `p` into the feasible box.
    fn project(&self, _p: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Options {
    pub max_iterations: usize,
    /// Relative step tolerance.
    pub xtol: f64,
    /// Relative cost-decrease tolerance.
    pub ftol: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            xtol: 1e-14,
            ftol: 1e-15,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Row-major Jacobian at the solution.
    pub jacobian: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Solution {
    pub fn normal_matrix(&self) -> DMatrix<f64> {
        let np = self.params.len();
        let j = DMatrix::from_row_slice(self.residuals.len(), np, &self.jacobian);
        j.transpose() * j
    }

    /// Condition number of the column-normalised Jacobian.
    pub fn condition_number(&self) -> f64 {
        let np = self.params.len();
        let nr = self.residuals.len();
        let mut j = DMatrix::from_row_slice(nr, np, &self.jacobian);
        for mut col in j.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
        let sv = j.singular_values();
        let max = sv.max();
        let min = sv.min();
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }
}

fn half_sum_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

pub(crate) fn minimize<P: Problem>(problem: &P, start: &[f64], opts: Options) -> Solution {
    let np = problem.n_params();
    let nr = problem.n_residuals();
    let mut p = start.to_vec();
    problem.project(&mut p);

    let mut r = vec![0.0; nr];
    let mut jac = vec![0.0; nr * np];
    problem.evaluate(&p, &mut r, &mut jac);
    let mut cost = half_sum_sq(&r);

    let mut trial = vec![0.0; np];
    let mut r_trial = vec![0.0; nr];
    let mut jac_trial = vec![0.0; nr * np];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let j = DMatrix::from_row_slice(nr, np, &jac);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * DVector::from_column_slice(&r);

        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..np {
                let d = jtj[(k, k)].max(1e-300);
                a[(k, k)] += lambda * d;
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            for k in 0..np {
                trial[k] = p[k] + step[k];
            }
            problem.project(&mut trial);
            problem.evaluate(&trial, &mut r_trial, &mut jac_trial);
            let trial_cost = half_sum_sq(&r_trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                let step_norm: f64 = p.iter().zip(&trial).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let p_norm: f64 = p.iter().map(|a| a * a).sum::<f64>().sqrt();
                let decrease = cost - trial_cost;
                std::mem::swap(&mut p, &mut trial);
                std::mem::swap(&mut r, &mut r_trial);
                std::mem::swap(&mut jac, &mut jac_trial);
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if step_norm <= opts.xtol * (p_norm + opts.xtol) || decrease <= opts.ftol * cost {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // no descent direction left at working precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }

    Solution {
        params: p,
        residuals: r,
        jacobian: jac,
        cost,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ExpDecay {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl Problem for ExpDecay {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.t.len()
        }
        fn evaluate(&self, p: &[f64], r: &mut [f64], jac: &mut [f64]) {
            for (k, (&t, &y)) in self.t.iter().zip(&self.y).enumerate() {
                let e = (-p[1] * t).exp();
                r[k] = p[0] * e - y;
                jac[2 * k] = e;
                jac[2 * k + 1] = -p[0] * t * e;
            }
        }
        fn project(&self, p: &mut [f64]) {
            p[1] = p[1].max(0.0);
        }
    }

    #[test]
    fn recovers_exponential() {
        let t: Vec<f64> = (0..40).map(|k| k as f64 * 0.1).collect();
        let y = t.iter().map(|t| 2.5 * (-0.7 * t).exp()).collect();
        let prob = ExpDecay { t, y };
        let sol = minimize(&prob, &[1.0, 2.0], Options::default());
        assert!(sol.converged);
        assert!((sol.params[0] - 2.5).abs() < 1e-10);
        assert!((sol.params[1] - 0.7).abs() < 1e-10);
        assert!(sol.condition_number().is_finite());
    }

    #[test]
    fn projection_is_respected() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        // data growing with t: unconstrained optimum has negative rate
        let y = t.iter().map(|t| (0.3 * t).exp()).collect();
        let prob = ExpDecay { t, y };
        let sol = minimize(&prob, &[1.0, 1.0], Options::default());
        assert!(sol.params[1] >= 0.0);
    }
}
