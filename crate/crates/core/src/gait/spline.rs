/// Interpolating cubic spline through `(i, y[i])` with zero second derivative
/// at both ends.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    y: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    /// Needs at least two samples.
    pub fn new(y: &[f64]) -> Self {
        assert!(y.len() >= 2, "spline needs two knots");
        let n = y.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system M[i-1] + 4 M[i] + M[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]).
            let inner = n - 2;
            let mut c = vec![0.0; inner];
            let mut d = vec![0.0; inner];
            for k in 0..inner {
                let i = k + 1;
                let rhs = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
                let denom = if k == 0 { 4.0 } else { 4.0 - c[k - 1] };
                c[k] = 1.0 / denom;
                d[k] = if k == 0 { rhs / denom } else { (rhs - d[k - 1]) / denom };
            }
            m[inner] = d[inner - 1];
            for k in (0..inner - 1).rev() {
                m[k + 1] = d[k] - c[k] * m[k + 2];
            }
        }
        Self { y: y.to_vec(), m }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let k = (x.floor().max(0.0) as usize).min(n - 2);
        let t = x - k as f64;
        let u = 1.0 - t;
        u * self.y[k] + t * self.y[k + 1] + ((u * u * u - u) * self.m[k] + (t * t * t - t) * self.m[k + 1]) / 6.0
    }
}

/// Resamples `y` to `m` evenly spaced points spanning the same interval; the
/// first and last outputs are the original end samples. Monotone input is
/// clamped to its own range, since the spline can dip past a flat end.
pub fn natural_cubic_resample(y: &[f64], m: usize) -> Vec<f64> {
    let n = y.len();
    if n == m {
        return y.to_vec();
    }
    let spline = NaturalCubicSpline::new(y);
    let span = (n - 1) as f64;
    let steps = (m - 1) as f64;
    let mut out: Vec<f64> = (0..m).map(|i| spline.eval(i as f64 * span / steps)).collect();
    let rising = y.windows(2).all(|w| w[1] >= w[0]);
    let falling = y.windows(2).all(|w| w[1] <= w[0]);
    if rising || falling {
        let (lo, hi) = if rising { (y[0], y[n - 1]) } else { (y[n - 1], y[0]) };
        out.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    }
    out[0] = y[0];
    out[m - 1] = y[n - 1];
    out
}
