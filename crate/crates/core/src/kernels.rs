//! Row-stochastic Markov kernels on finite spaces.
//!
//! Row `x` of a [`MarkovKernel`] is the law `P_x`. The kernel acts on
//! functions by `Pf(x) = Σ_y P_x(y) f(y)` and on measures by
//! `P*μ(y) = Σ_x μ(x) P_x(y)`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::ensure_len;
use crate::metric::WeightedGraph;
use crate::slope::ScalarField;
use crate::transport::DiscreteMeasure;
use crate::{Error, Result};

/// Row-sum tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Wrapped-Gaussian terms are summed until the neglected tail is below this.
pub const WRAP_TAIL: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovKernel {
    rows: Array2<f64>,
}

impl MarkovKernel {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        let (n, m) = rows.dim();
        ensure_len(n, m)?;
        if n == 0 {
            return Err(Error::Empty("kernel has no states"));
        }
        if rows.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Malformed(
                "kernel has a negative or non-finite entry".into(),
            ));
        }
        for (x, row) in rows.rows().into_iter().enumerate() {
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Malformed(format!("kernel row {x} sums to {s}")));
            }
        }
        Ok(Self { rows })
    }

    /// Rescales each row of a nonnegative matrix to unit mass.
    pub fn from_unnormalised(mut rows: Array2<f64>) -> Result<Self> {
        for mut row in rows.rows_mut() {
            row.mapv_inplace(|v| v.max(0.0));
            let s = row.sum();
            if !(s > 0.0) {
                return Err(Error::Degenerate("kernel row has no mass"));
            }
            row /= s;
        }
        Self::new(rows)
    }

    pub fn identity(n: usize) -> Self {
        Self { rows: Array2::eye(n) }
    }

    /// Every `P_x` equal to `δ_target`.
    pub fn collapse(n: usize, target: usize) -> Self {
        let mut rows = Array2::zeros((n, n));
        rows.column_mut(target).fill(1.0);
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    /// `P_x` as a measure.
    pub fn row_measure(&self, x: usize) -> DiscreteMeasure {
        let row: Vec<f64> = self.rows.row(x).to_vec();
        DiscreteMeasure::new(row.clone())
            .unwrap_or_else(|_| DiscreteMeasure::from_masses(&row).expect("kernel rows carry positive mass"))
    }

    /// `Pf`.
    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        ensure_len(self.len(), f.len())?;
        let v = Array1::from(f.values().to_vec());
        ScalarField::new(self.rows.dot(&v).to_vec())
    }

    /// `P*μ`.
    pub fn adjoint_apply(&self, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        ensure_len(self.len(), mu.len())?;
        let m = Array1::from(mu.weights().to_vec());
        let out = m.dot(&self.rows).mapv(|v| v.max(0.0));
        DiscreteMeasure::from_masses(out.as_slice().expect("contiguous"))
    }

    /// The kernel `x ↦ Σ_y P_x(y) Q_y`, i.e. the matrix product `PQ`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        ensure_len(self.len(), other.len())?;
        Self::from_unnormalised(self.rows.dot(&other.rows))
    }

    /// Largest row-wise total-variation distance `½ Σ_y |P_x(y) − Q_x(y)|`.
    pub fn total_variation_defect(&self, other: &Self) -> Result<f64> {
        ensure_len(self.len(), other.len())?;
        Ok(self
            .rows
            .rows()
            .into_iter()
            .zip(other.rows.rows())
            .map(|(a, b)| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .fold(0.0, f64::max))
    }
}

/// Construction of the discrete torus heat kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HeatConstruction {
    /// Wrapped Gaussian of variance `t` sampled at the grid points.
    #[default]
    WrappedGaussian,
    /// `exp(t Δ_h / 2)` for the cycle-graph Laplacian, evaluated spectrally.
    GraphLaplacian,
}

/// Heat kernel at time `t` on the unit-circumference torus with `n` points
/// (the space of [`crate::metric::FiniteMetricSpace::unit_torus`]).
pub fn torus_heat_kernel(n: usize, t: f64, construction: HeatConstruction) -> Result<MarkovKernel> {
    if n < 3 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: n as f64,
            reason: "torus needs at least 3 points",
        });
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            reason: "heat time must be positive",
        });
    }
    let profile: Vec<f64> = match construction {
        HeatConstruction::WrappedGaussian => {
            // exp(-(K - 1/2)^2 / 2t) < tail once K exceeds 1/2 + sqrt(2t ln(1/tail)).
            let wraps = (0.5 + (2.0 * t * (1.0 / WRAP_TAIL).ln()).sqrt()).ceil() as i64 + 1;
            (0..n)
                .map(|k| {
                    let d = k.min(n - k) as f64 / n as f64;
                    (-wraps..=wraps)
                        .map(|w| (-(d + w as f64).powi(2) / (2.0 * t)).exp())
                        .sum()
                })
                .collect()
        }
        HeatConstruction::GraphLaplacian => {
            let h2 = (1.0 / n as f64).powi(2);
            let decay: Vec<f64> = (0..n)
                .map(|k| {
                    let s = (PI * k as f64 / n as f64).sin();
                    (-t * 2.0 * s * s / h2).exp()
                })
                .collect();
            (0..n)
                .map(|j| {
                    decay
                        .iter()
                        .enumerate()
                        .map(|(k, e)| e * (2.0 * PI * (k * j % n) as f64 / n as f64).cos())
                        .sum::<f64>()
                        / n as f64
                })
                .collect()
        }
    };
    let mut profile: Vec<f64> = (0..n)
        .map(|k| 0.5 * (profile[k] + profile[(n - k) % n]).max(0.0))
        .collect();
    let total: f64 = profile.iter().sum();
    profile.iter_mut().for_each(|v| *v /= total);
    MarkovKernel::new(Array2::from_shape_fn((n, n), |(x, y)| profile[(y + n - x) % n]))
}

/// `((1 − α) I + α W)^steps` with `W` the degree-normalised adjacency of `graph`.
pub fn random_walk_kernel(graph: &WeightedGraph, steps: usize, laziness: f64) -> Result<MarkovKernel> {
    if !(0.0..=1.0).contains(&laziness) {
        return Err(Error::InvalidParameter {
            name: "laziness",
            value: laziness,
            reason: "laziness must lie in [0, 1]",
        });
    }
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            value: 0.0,
            reason: "random walk needs at least one step",
        });
    }
    let n = graph.len();
    let mut one = Array2::<f64>::eye(n) * (1.0 - laziness);
    for x in 0..n {
        let nb = graph.neighbors(x);
        if nb.is_empty() {
            return Err(Error::Disconnected(x));
        }
        let share = laziness / nb.len() as f64;
        for &(y, _) in nb {
            one[[x, y]] += share;
        }
    }
    let mut result = Array2::<f64>::eye(n);
    let mut base = one;
    let mut e = steps;
    while e > 0 {
        if e & 1 == 1 {
            result = result.dot(&base);
        }
        e >>= 1;
        if e > 0 {
            base = base.dot(&base);
        }
    }
    MarkovKernel::from_unnormalised(result)
}

/// Builds one row per point in parallel from a row constructor.
pub fn kernel_from_rows(n: usize, row: impl Fn(usize) -> Vec<f64> + Sync) -> Result<MarkovKernel> {
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(&row).collect();
    let mut m = Array2::zeros((n, n));
    for (x, r) in rows.into_iter().enumerate() {
        ensure_len(n, r.len())?;
        m.row_mut(x).assign(&Array1::from(r));
    }
    MarkovKernel::from_unnormalised(m)
}
