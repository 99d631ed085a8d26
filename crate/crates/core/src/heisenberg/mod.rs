//! Step-2 nilpotent groups `R^n × R^{n(n−1)/2}`.
//!
//! The product is `(x, z)·(x', z') = (x + x', z + z' + ½(x_i x'_j − x_j x'_i))`
//! with area coordinates indexed by pairs `i < j` in lexicographic order. For
//! `n = 2` this is the three-dimensional Heisenberg group.

mod cc;
mod sde;

pub use cc::{cc_distance_estimate, cc_upper_from_origin, gauge_cc_ratio, CcEstimate};
pub use sde::{area_refinement_rms, left_translate_cloud, sample_diffusion, Cloud, SdeConfig};

use crate::{Error, Result};

/// Number of area coordinates for horizontal dimension `n`.
pub fn area_dim(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of the pair `(i, j)`, `i < j`, among the area coordinates.
pub fn area_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step2Point {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl Step2Point {
    pub fn new(x: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "n",
                value: x.len() as f64,
                reason: "horizontal dimension must be at least 2",
            });
        }
        if z.len() != area_dim(x.len()) {
            return Err(Error::DimensionMismatch {
                expected: area_dim(x.len()),
                found: z.len(),
            });
        }
        if x.iter().chain(&z).any(|v| !v.is_finite()) {
            return Err(Error::Malformed("group coordinates must be finite".into()));
        }
        Ok(Self { x, z })
    }

    /// `(x, y, z)` in the Heisenberg group.
    pub fn heisenberg(x: f64, y: f64, z: f64) -> Self {
        Self {
            x: vec![x, y],
            z: vec![z],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            z: vec![0.0; area_dim(n)],
        }
    }

    /// Builds a point from the flat layout `x_1..x_n, z_12..`.
    pub fn from_flat(n: usize, coords: &[f64]) -> Result<Self> {
        if coords.len() != n + area_dim(n) {
            return Err(Error::DimensionMismatch {
                expected: n + area_dim(n),
                found: coords.len(),
            });
        }
        Self::new(coords[..n].to_vec(), coords[n..].to_vec())
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.x.iter().chain(&self.z).copied().collect()
    }

    pub fn inverse(&self) -> Self {
        Self {
            x: self.x.iter().map(|v| -v).collect(),
            z: self.z.iter().map(|v| -v).collect(),
        }
    }

    /// `δ_λ(x, z) = (λx, λ²z)`.
    pub fn dilate(&self, lambda: f64) -> Self {
        Self {
            x: self.x.iter().map(|v| lambda * v).collect(),
            z: self.z.iter().map(|v| lambda * lambda * v).collect(),
        }
    }
}

/// Group law on flat coordinates; `out` may not alias the inputs.
pub(crate) fn mul_flat(n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..n {
        out[i] = a[i] + b[i];
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            out[k] = a[k] + b[k] + 0.5 * (a[i] * b[j] - a[j] * b[i]);
            k += 1;
        }
    }
}

pub fn group_mul(a: &Step2Point, b: &Step2Point) -> Result<Step2Point> {
    let n = a.n();
    if b.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.n(),
        });
    }
    let mut out = vec![0.0; n + area_dim(n)];
    mul_flat(n, &a.flat(), &b.flat(), &mut out);
    Ok(Step2Point {
        x: out[..n].to_vec(),
        z: out[n..].to_vec(),
    })
}

/// Korányi gauge `(|Δx|⁴ + |Δz|²)^{1/4}` of `a⁻¹·b` on flat coordinates.
pub(crate) fn gauge_flat(n: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut dx2 = 0.0;
    for i in 0..n {
        dx2 += (b[i] - a[i]).powi(2);
    }
    let mut dz2 = 0.0;
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let dz = b[k] - a[k] - 0.5 * (a[i] * b[j] - a[j] * b[i]);
            dz2 += dz * dz;
            k += 1;
        }
    }
    (dx2 * dx2 + dz2).sqrt().sqrt()
}

pub fn koranyi_gauge(a: &Step2Point, b: &Step2Point) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    Ok(gauge_flat(a.n(), &a.flat(), &b.flat()))
}

/// Largest `gauge(a, c) / (gauge(a, b) + gauge(b, c))` over the given triples.
pub fn quasi_triangle_constant(triples: &[(Step2Point, Step2Point, Step2Point)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (a, b, c) in triples {
        let lhs = koranyi_gauge(a, c)?;
        let rhs = koranyi_gauge(a, b)? + koranyi_gauge(b, c)?;
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    Ok(worst)
}
