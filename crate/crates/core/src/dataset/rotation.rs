use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};

pub type Rotation = [[f64; 3]; 3];

/// X-Y-Z Cardan decomposition in degrees, `R = Rx(x) * Ry(y) * Rz(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardanAngles {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Set when `|cos y| < 1e-7`; `x` is then fixed to 0.
    pub gimbal_lock: bool,
}

fn matmul(a: &Rotation, b: &Rotation) -> Rotation {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn rotation_from_cardan(x_deg: f64, y_deg: f64, z_deg: f64) -> Rotation {
    let (sx, cx) = x_deg.to_radians().sin_cos();
    let (sy, cy) = y_deg.to_radians().sin_cos();
    let (sz, cz) = z_deg.to_radians().sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    matmul(&matmul(&rx, &ry), &rz)
}

pub fn cardan_from_rotation(r: &Rotation) -> Result<CardanAngles> {
    if r.iter().flatten().any(|v| !v.is_finite()) {
        return Err(DatasetError::NotARotation("non-finite entry".into()));
    }
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            if (dot - want).abs() > 1e-6 {
                return Err(DatasetError::NotARotation(format!("rows {i},{j} dot product {dot}")));
            }
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    if (det - 1.0).abs() > 1e-6 {
        return Err(DatasetError::NotARotation(format!("determinant {det}")));
    }
    let y = r[0][2].clamp(-1.0, 1.0).asin();
    if y.cos().abs() < 1e-7 {
        let z = r[1][0].atan2(r[1][1]);
        return Ok(CardanAngles { x: 0.0, y: y.to_degrees(), z: z.to_degrees(), gimbal_lock: true });
    }
    let x = (-r[1][2]).atan2(r[2][2]);
    let z = (-r[0][1]).atan2(r[0][0]);
    Ok(CardanAngles { x: x.to_degrees(), y: y.to_degrees(), z: z.to_degrees(), gimbal_lock: false })
}
