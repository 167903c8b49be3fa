use serde::{Deserialize, Serialize};

use super::{sigmoid, ModelError, Result};

pub const PEGASOS_EPOCHS: usize = 10_000;

/// Linear SVM `w . x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub w: Vec<f64>,
    pub b: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

impl LinearSvm {
    /// Full-batch Pegasos on the L2-regularised hinge loss with
    /// `lambda = 1/(2 C n)`, step `1/(lambda t)` and the `1/sqrt(lambda)` ball
    /// projection. The bias is an augmented constant feature. Iterates are kept
    /// as coefficients on the training rows, so an epoch costs `O(n^2)`
    /// regardless of the input width.
    pub fn fit(c: f64, x: &[Vec<f64>], y: &[u8], epochs: usize) -> Result<Self> {
        if !(c > 0.0) {
            return Err(ModelError::InvalidHyper(format!("C must be positive, got {c}")));
        }
        let n = x.len();
        let lambda = 1.0 / (2.0 * c * n as f64);
        let sign: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = dot(&x[i], &x[j]) + 1.0;
                gram[i * n + j] = k;
                gram[j * n + i] = k;
            }
        }
        let mut alpha = vec![0.0; n];
        let mut margin = vec![0.0; n];
        let radius2 = 1.0 / lambda;
        for t in 1..=epochs {
            let eta = 1.0 / (lambda * t as f64);
            let shrink = 1.0 - eta * lambda;
            for (i, a) in alpha.iter_mut().enumerate() {
                *a *= shrink;
                if sign[i] * margin[i] < 1.0 {
                    *a += eta * sign[i] / n as f64;
                }
            }
            for (i, m) in margin.iter_mut().enumerate() {
                *m = dot(&gram[i * n..(i + 1) * n], &alpha);
            }
            let norm2 = dot(&margin, &alpha);
            if norm2 > radius2 {
                let s = (radius2 / norm2).sqrt();
                alpha.iter_mut().for_each(|a| *a *= s);
                margin.iter_mut().for_each(|m| *m *= s);
            }
        }
        let d = x.first().map_or(0, Vec::len);
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        for (row, a) in x.iter().zip(&alpha) {
            for (wj, xj) in w.iter_mut().zip(row) {
                *wj += a * xj;
            }
            b += a;
        }
        if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(ModelError::NumericalFailure("linear SVM weights are not finite".into()));
        }
        Ok(Self { w, b })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    pub fn proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

pub const SMO_TOL: f64 = 1e-3;

/// Kernel SVM with `K(x, z) = (gamma x . z + 1)^degree`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySvm {
    pub degree: u32,
    pub gamma: f64,
    /// Support vectors with their `alpha_i y_i` coefficients.
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub b: f64,
    pub iterations: usize,
}

fn poly(a: &[f64], b: &[f64], gamma: f64, degree: u32) -> f64 {
    (gamma * dot(a, b) + 1.0).powi(degree as i32)
}

impl PolySvm {
    /// SMO on the dual with maximal-violating-pair selection, stopping once
    /// the KKT gap is below [`SMO_TOL`].
    pub fn fit(c: f64, degree: u32, x: &[Vec<f64>], y: &[u8]) -> Result<Self> {
        if !(c > 0.0) || degree == 0 {
            return Err(ModelError::InvalidHyper(format!("need C > 0 and degree >= 1, got C={c}, degree={degree}")));
        }
        let n = x.len();
        let d = x.first().map_or(1, Vec::len).max(1);
        let gamma = 1.0 / d as f64;
        let yv: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = yv[i] * yv[j] * poly(&x[i], &x[j], gamma, degree);
                q[i * n + j] = k;
                q[j * n + i] = k;
            }
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NumericalFailure("polynomial kernel overflowed".into()));
        }
        let mut alpha = vec![0.0; n];
        // Gradient of 1/2 a'Qa - e'a.
        let mut grad = vec![-1.0; n];
        let max_iter = (100 * n).max(100_000);
        let mut iterations = 0;
        let up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
        let low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);
        while iterations < max_iter {
            let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
            let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
            for t in 0..n {
                let v = -yv[t] * grad[t];
                if up(alpha[t], yv[t]) && v > gmax {
                    gmax = v;
                    i = t;
                }
                if low(alpha[t], yv[t]) && v < gmin {
                    gmin = v;
                    j = t;
                }
            }
            if i == usize::MAX || j == usize::MAX || gmax - gmin < SMO_TOL {
                break;
            }
            iterations += 1;
            let (old_i, old_j) = (alpha[i], alpha[j]);
            let quad = (q[i * n + i] + q[j * n + j] - 2.0 * yv[i] * yv[j] * q[i * n + j]).max(1e-12);
            if yv[i] != yv[j] {
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += q[t * n + i] * di + q[t * n + j] * dj;
            }
        }
        // Bias from free vectors, or the midpoint of the feasible interval.
        let (mut sum, mut count) = (0.0, 0usize);
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..n {
            let yg = yv[t] * grad[t];
            if alpha[t] > 0.0 && alpha[t] < c {
                sum += yg;
                count += 1;
            } else if (alpha[t] >= c && yv[t] < 0.0) || (alpha[t] <= 0.0 && yv[t] > 0.0) {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        }
        let rho = if count > 0 {
            sum / count as f64
        } else if ub.is_finite() && lb.is_finite() {
            (ub + lb) / 2.0
        } else if ub.is_finite() {
            ub
        } else {
            lb
        };
        let mut support = Vec::new();
        let mut coef = Vec::new();
        for t in 0..n {
            if alpha[t] > 0.0 {
                support.push(x[t].clone());
                coef.push(alpha[t] * yv[t]);
            }
        }
        Ok(Self { degree, gamma, support, coef, b: -rho, iterations })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support.iter().zip(&self.coef).map(|(s, a)| a * poly(s, x, self.gamma, self.degree)).sum::<f64>() + self.b
    }

    pub fn proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}
