//! Logistic regression on the mean log-loss with optional L2 penalty.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Newton steps with backtracking line search.
    Newton,
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub solver: Solver,
    pub max_iter: usize,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
    /// L2 penalty on coefficients (not the intercept).
    pub l2: f64,
    /// Step size for gradient descent.
    pub learning_rate: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            solver: Solver::Newton,
            max_iter: 100,
            tol: 1e-6,
            l2: 0.0,
            learning_rate: 1.0,
        }
    }
}

impl LogisticParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::config(format!("{prefix}.max_iter"), "must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config(format!("{prefix}.tol"), "must be > 0"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::config(format!("{prefix}.l2"), "must be >= 0"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config(format!("{prefix}.learning_rate"), "must be > 0"));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn linear(row: ArrayView1<f64>, intercept: f64, coef: &[f64]) -> f64 {
    intercept + row.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>()
}

/// Mean log-loss plus `l2 / 2 * |coef|^2`.
pub fn log_loss(x: &Array2<f64>, y: &[bool], intercept: f64, coef: &[f64], l2: f64) -> f64 {
    let n = x.nrows() as f64;
    let data: f64 = x
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &yi)| {
            let z = linear(row, intercept, coef);
            if yi {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    data / n + 0.5 * l2 * coef.iter().map(|c| c * c).sum::<f64>()
}

/// Gradient of [`log_loss`]; element 0 is the intercept.
pub fn log_loss_gradient(x: &Array2<f64>, y: &[bool], intercept: f64, coef: &[f64], l2: f64) -> Vec<f64> {
    let n = x.nrows() as f64;
    let mut g = vec![0.0; coef.len() + 1];
    for (row, &yi) in x.rows().into_iter().zip(y) {
        let r = sigmoid(linear(row, intercept, coef)) - if yi { 1.0 } else { 0.0 };
        g[0] += r;
        for (gj, xj) in g[1..].iter_mut().zip(row.iter()) {
            *gj += r * xj;
        }
    }
    for gj in g.iter_mut() {
        *gj /= n;
    }
    for (gj, c) in g[1..].iter_mut().zip(coef) {
        *gj += l2 * c;
    }
    g
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LogisticFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub loss_trace: Vec<f64>,
}

/// Mean-loss Hessian with the intercept as coordinate 0.
fn hessian(x: &Array2<f64>, intercept: f64, coef: &[f64], l2: f64) -> DMatrix<f64> {
    let d = coef.len() + 1;
    let mut h = DMatrix::zeros(d, d);
    let mut aug = vec![1.0; d];
    for row in x.rows() {
        let p = sigmoid(linear(row, intercept, coef));
        let w = p * (1.0 - p);
        if w == 0.0 {
            continue;
        }
        aug[1..].iter_mut().zip(row.iter()).for_each(|(a, &v)| *a = v);
        for i in 0..d {
            let wi = w * aug[i];
            if wi == 0.0 {
                continue;
            }
            for j in i..d {
                h[(i, j)] += wi * aug[j];
            }
        }
    }
    let n = x.nrows() as f64;
    for i in 0..d {
        for j in i..d {
            h[(i, j)] /= n;
            h[(j, i)] = h[(i, j)];
        }
        if i > 0 {
            h[(i, i)] += l2;
        }
    }
    h
}

/// Solves `h * step = g`, adding diagonal jitter when `h` is singular.
fn newton_direction(mut h: DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let rhs = DVector::from_column_slice(g);
    let scale = (0..h.nrows()).map(|i| h[(i, i)]).fold(0.0f64, f64::max).max(1e-12);
    let mut jitter = 0.0;
    for _ in 0..20 {
        if let Some(chol) = h.clone().cholesky() {
            let step = chol.solve(&rhs);
            if step.iter().all(|v| v.is_finite()) {
                return step.iter().copied().collect();
            }
        }
        let next = if jitter == 0.0 { scale * 1e-10 } else { jitter * 10.0 };
        for i in 0..h.nrows() {
            h[(i, i)] += next - jitter;
        }
        jitter = next;
    }
    g.to_vec()
}

pub(crate) fn fit(x: &Array2<f64>, y: &[bool], params: &LogisticParams) -> LogisticFit {
    let d = x.ncols();
    let n_pos = y.iter().filter(|&&v| v).count() as f64;
    let prior = n_pos / y.len() as f64;
    let mut intercept = (prior / (1.0 - prior)).ln();
    let mut coef = vec![0.0; d];
    let mut loss = log_loss(x, y, intercept, &coef, params.l2);
    let mut trace = vec![loss];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let g = log_loss_gradient(x, y, intercept, &coef, params.l2);
        if norm(&g) < params.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let direction = match params.solver {
            Solver::Newton => newton_direction(hessian(x, intercept, &coef, params.l2), &g),
            Solver::GradientDescent => g.iter().map(|v| v * params.learning_rate).collect(),
        };
        let slope: f64 = direction.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let b = intercept - t * direction[0];
            let c: Vec<f64> = coef.iter().zip(&direction[1..]).map(|(c, s)| c - t * s).collect();
            let next = log_loss(x, y, b, &c, params.l2);
            if next <= loss - 1e-4 * t * slope {
                intercept = b;
                coef = c;
                loss = next;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.push(loss);
        if !accepted {
            break;
        }
    }
    if !converged {
        converged = norm(&log_loss_gradient(x, y, intercept, &coef, params.l2)) < params.tol;
    }
    LogisticFit {
        intercept,
        coef,
        iterations,
        converged,
        loss_trace: trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn intercept_only_matches_prior() {
        let x = Array2::zeros((10, 0));
        let y: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let f = fit(&x, &y, &LogisticParams::default());
        assert!((f.intercept - (0.3f64 / 0.7).ln()).abs() < 1e-12);
        assert!(f.converged);
    }

    #[test]
    fn recovers_known_coefficients_on_grouped_data() {
        // Two groups with exact event rates 0.2 and 0.5 give the closed form
        // intercept logit(0.2) and slope logit(0.5) - logit(0.2).
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (xv, pos, n) in [(0.0, 20, 100), (1.0, 50, 100)] {
            for i in 0..n {
                rows.push(xv);
                y.push(i < pos);
            }
        }
        let x = Array2::from_shape_vec((200, 1), rows).unwrap();
        let f = fit(&x, &y, &LogisticParams::default());
        assert!(f.converged);
        assert!((f.intercept - (0.25f64).ln()).abs() < 1e-5);
        assert!((f.coef[0] - 4f64.ln()).abs() < 1e-5);
        let trace = &f.loss_trace;
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gradient_descent_agrees_with_newton() {
        let x = array![[0.0, 1.0], [1.0, 0.5], [2.0, 0.0], [3.0, 1.5], [0.5, 2.0], [2.5, 0.2]];
        let y = [false, false, true, true, true, false];
        let newton = fit(&x, &y, &LogisticParams::default());
        let gd = fit(
            &x,
            &y,
            &LogisticParams {
                solver: Solver::GradientDescent,
                max_iter: 200_000,
                learning_rate: 2.0,
                ..Default::default()
            },
        );
        assert!(gd.converged);
        for (a, b) in newton.coef.iter().zip(&gd.coef) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn separable_data_stays_finite() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [2.0, 2.0], [3.0, 2.0]];
        let y = [false, false, true, true];
        let f = fit(&x, &y, &LogisticParams::default());
        assert!(f.coef.iter().all(|c| c.is_finite()));
        for (row, &yi) in x.rows().into_iter().zip(&y) {
            assert_eq!(sigmoid(linear(row, f.intercept, &f.coef)) > 0.5, yi);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
