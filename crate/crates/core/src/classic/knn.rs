use serde::{Deserialize, Serialize};

/// Stored training set; prediction scans all rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

impl Knn {
    pub fn fit(k: usize, x: &[Vec<f64>], y: &[u8]) -> Self {
        Self { k: k.min(x.len()).max(1), x: x.to_vec(), y: y.to_vec() }
    }

    /// `(index, distance)` of the `k` nearest rows; equal distances keep the lower index.
    pub fn neighbors(&self, q: &[f64]) -> Vec<(usize, f64)> {
        let mut d: Vec<(usize, f64)> = self.x.iter().enumerate().map(|(i, r)| (i, sq_dist(r, q))).collect();
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d.truncate(self.k);
        d.into_iter().map(|(i, s)| (i, s.sqrt())).collect()
    }

    /// Positive vote share. A split vote goes to the class with the smaller
    /// summed neighbour distance, then to class 0; a class-0 win is reported
    /// just below 0.5 so the threshold reproduces it.
    pub fn proba(&self, q: &[f64]) -> f64 {
        let nb = self.neighbors(q);
        let pos = nb.iter().filter(|(i, _)| self.y[*i] == 1).count();
        let neg = nb.len() - pos;
        if pos != neg {
            return pos as f64 / nb.len() as f64;
        }
        let dist = |c: u8| nb.iter().filter(|(i, _)| self.y[*i] == c).map(|(_, d)| d).sum::<f64>();
        if dist(1) < dist(0) {
            0.5
        } else {
            0.5f64.next_down()
        }
    }
}
