use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

pub const MODE_GRAD_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 100;
const JITTERS: [f64; 7] = [0.0, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-3];

/// Binary GP classifier: RBF kernel, logistic likelihood, Laplace posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpClassifier {
    pub lengthscale: f64,
    pub variance: f64,
    pub x: Vec<Vec<f64>>,
    /// `d log p(y|f) / df` at the mode.
    pub grad: Vec<f64>,
    pub sqrt_w: Vec<f64>,
    /// Row-major lower Cholesky factor of `I + W^1/2 K W^1/2`.
    pub chol: Vec<f64>,
    /// Negative unnormalised log posterior after each accepted Newton step.
    pub objective_trace: Vec<f64>,
    pub final_grad_norm: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn sigma(z: f64) -> f64 {
    super::sigmoid(z)
}

fn log_sigma(z: f64) -> f64 {
    if z >= 0.0 { -(-z).exp().ln_1p() } else { z - z.exp().ln_1p() }
}

/// Median of the pairwise Euclidean distances, 1 when all rows coincide.
pub fn median_lengthscale(x: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(x.len() * x.len().saturating_sub(1) / 2);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            d.push(sq_dist(&x[i], &x[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    if med > 0.0 { med } else { 1.0 }
}

fn cholesky(b: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    for jitter in JITTERS {
        let mut m = b.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            if jitter > 0.0 {
                log::warn!("GP Cholesky needed jitter {jitter:e}");
            }
            return Ok(c);
        }
    }
    Err(ModelError::NumericalFailure("GP Cholesky not positive definite after jitter 1e-3".into()))
}

struct Laplace {
    k: DMatrix<f64>,
    t: DVector<f64>,
}

impl Laplace {
    fn grad_w(&self, f: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = f.len();
        let mut g = DVector::zeros(n);
        let mut w = DVector::zeros(n);
        for i in 0..n {
            let s = sigma(f[i]);
            g[i] = self.t[i] - s;
            w[i] = s * (1.0 - s);
        }
        (g, w)
    }

    fn objective(&self, a: &DVector<f64>, f: &DVector<f64>) -> f64 {
        let lik: f64 = (0..f.len()).map(|i| log_sigma((2.0 * self.t[i] - 1.0) * f[i])).sum();
        0.5 * a.dot(f) - lik
    }

    /// One Newton proposal in the `a` parametrisation (`f = K a`).
    fn newton(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        let n = f.len();
        let (g, w) = self.grad_w(f);
        let sw = w.map(f64::sqrt);
        let b_mat = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |i, j| sw[i] * self.k[(i, j)] * sw[j]);
        let chol = cholesky(&b_mat)?;
        let b = w.component_mul(f) + g;
        let kb = &self.k * &b;
        let rhs = sw.component_mul(&kb);
        let sol = chol.solve(&rhs);
        Ok(b - sw.component_mul(&sol))
    }
}

impl GpClassifier {
    pub fn fit(x: &[Vec<f64>], y: &[u8]) -> Result<Self> {
        let n = x.len();
        let lengthscale = median_lengthscale(x);
        let variance = 1.0;
        let k = DMatrix::from_fn(n, n, |i, j| variance * (-sq_dist(&x[i], &x[j]) / (2.0 * lengthscale * lengthscale)).exp());
        let t = DVector::from_iterator(n, y.iter().map(|&v| f64::from(v)));
        let lap = Laplace { k, t };

        let mut a = DVector::zeros(n);
        let mut f = DVector::zeros(n);
        let mut obj = lap.objective(&a, &f);
        let mut trace = vec![obj];
        let mut grad_norm = f64::INFINITY;
        for _ in 0..MAX_NEWTON {
            let (g, _) = lap.grad_w(&f);
            grad_norm = (&g - &a).norm();
            if grad_norm < MODE_GRAD_TOL {
                break;
            }
            let proposal = lap.newton(&f)?;
            let dir = &proposal - &a;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let a_new = &a + &dir * step;
                let f_new = &lap.k * &a_new;
                let o = lap.objective(&a_new, &f_new);
                if o <= obj {
                    a = a_new;
                    f = f_new;
                    obj = o;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            trace.push(obj);
        }
        let (g, w) = lap.grad_w(&f);
        grad_norm = grad_norm.min((&g - &a).norm());
        if !obj.is_finite() || f.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NumericalFailure("GP mode search diverged".into()));
        }
        let sw = w.map(f64::sqrt);
        let b_mat = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |i, j| sw[i] * lap.k[(i, j)] * sw[j]);
        let l = cholesky(&b_mat)?.l();
        let chol = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
        Ok(Self {
            lengthscale,
            variance,
            x: x.to_vec(),
            grad: g.iter().copied().collect(),
            sqrt_w: sw.iter().copied().collect(),
            chol,
            objective_trace: trace,
            final_grad_norm: grad_norm,
        })
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        self.variance * (-sq_dist(a, b) / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }

    /// Latent mean and variance at `q`.
    pub fn latent(&self, q: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let ks: Vec<f64> = self.x.iter().map(|r| self.kernel(r, q)).collect();
        let mean = ks.iter().zip(&self.grad).map(|(k, g)| k * g).sum();
        // Forward substitution L v = W^1/2 k*.
        let mut v = vec![0.0; n];
        for i in 0..n {
            let mut s = self.sqrt_w[i] * ks[i];
            for j in 0..i {
                s -= self.chol[i * n + j] * v[j];
            }
            v[i] = s / self.chol[i * n + i];
        }
        let var = (self.variance - v.iter().map(|x| x * x).sum::<f64>()).max(0.0);
        (mean, var)
    }

    /// Probit-approximated predictive probability.
    pub fn proba(&self, q: &[f64]) -> f64 {
        let (m, v) = self.latent(q);
        sigma(m / (1.0 + std::f64::consts::PI * v / 8.0).sqrt())
    }
}
