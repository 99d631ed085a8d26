//! Inf-convolution semigroup `Q_t f(x) = min_y f(y) + t L(d(x, y) / t)` for
//! the power Lagrangian `L(s) = s^p / p`.
//!
//! Minima are taken by brute force over all points, so every value is exact
//! for the given finite space.

use rayon::prelude::*;

use crate::error::ensure_len;
use crate::metric::FiniteMetricSpace;
use crate::slope::{lipschitz_constant, local_slope, ScalarField};
use crate::{Error, Result};

/// `L(s) = s^p / p` with `p > 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLagrangian {
    p: f64,
}

impl PowerLagrangian {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidParameter {
                name: "p",
                value: p,
                reason: "power Lagrangian needs 1 < p < ∞",
            });
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `q = p / (p − 1)`.
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn eval(&self, s: f64) -> f64 {
        s.abs().powf(self.p) / self.p
    }

    /// `t L(d / t)` written to stay finite as `t → 0` with `d = 0`.
    fn action(&self, d: f64, t: f64) -> f64 {
        if d == 0.0 {
            0.0
        } else {
            d.powf(self.p) / (self.p * t.powf(self.p - 1.0))
        }
    }
}

/// `L*(s) = s^q / q`.
pub fn legendre(lagrangian: &PowerLagrangian, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "s",
            value: s,
            reason: "Legendre transform is evaluated at s >= 0",
        });
    }
    let q = lagrangian.q();
    Ok(s.powf(q) / q)
}

/// `max_{w ∈ [0, w_max] on a grid of the given step} (w s − L(w))`.
pub fn legendre_numeric(lagrangian: &PowerLagrangian, s: f64, w_max: f64, step: f64) -> f64 {
    let steps = (w_max / step).round() as usize;
    (0..=steps)
        .map(|k| {
            let w = k as f64 * step;
            w * s - lagrangian.eval(w)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            reason: "time must be finite and nonnegative",
        });
    }
    Ok(())
}

/// `(Q_t f(x), argmin)` at every point; ties resolve to the smallest index,
/// except that `x` itself wins ties.
pub fn hopf_lax_with_minimizers(
    f: &ScalarField,
    t: f64,
    lagrangian: &PowerLagrangian,
    space: &FiniteMetricSpace,
) -> Result<(ScalarField, Vec<usize>)> {
    ensure_len(space.len(), f.len())?;
    check_time(t)?;
    let n = space.len();
    if t == 0.0 {
        return Ok((f.clone(), (0..n).collect()));
    }
    let v = f.values();
    let (values, arg): (Vec<f64>, Vec<usize>) = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut best = (v[x], x);
            for y in 0..n {
                let c = v[y] + lagrangian.action(space.d(x, y), t);
                if c < best.0 {
                    best = (c, y);
                }
            }
            best
        })
        .unzip();
    Ok((ScalarField::new(values)?, arg))
}

/// `Q_t f`, with `Q_0 f = f`.
pub fn hopf_lax(
    f: &ScalarField,
    t: f64,
    lagrangian: &PowerLagrangian,
    space: &FiniteMetricSpace,
) -> Result<ScalarField> {
    hopf_lax_with_minimizers(f, t, lagrangian, space).map(|(q, _)| q)
}

/// Largest `t` below which every point is its own Hopf-Lax minimizer:
/// `osc(f) < d_min^p / (p t^{p−1})`.
pub fn identity_threshold(f: &ScalarField, lagrangian: &PowerLagrangian, space: &FiniteMetricSpace) -> f64 {
    let osc = f.max() - f.min();
    let dmin = space.min_positive_distance();
    if osc == 0.0 || !dmin.is_finite() {
        return f64::INFINITY;
    }
    let p = lagrangian.p();
    (dmin.powf(p) / (p * osc)).powf(1.0 / (p - 1.0))
}

/// `‖Q_t(Q_s f) − Q_{t+s} f‖_∞`.
pub fn semigroup_defect(
    f: &ScalarField,
    s: f64,
    t: f64,
    lagrangian: &PowerLagrangian,
    space: &FiniteMetricSpace,
) -> Result<f64> {
    if !(s > 0.0) || !(t > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            value: s.min(t),
            reason: "semigroup times must be positive",
        });
    }
    let two_step = hopf_lax(&hopf_lax(f, s, lagrangian, space)?, t, lagrangian, space)?;
    let one_step = hopf_lax(f, s + t, lagrangian, space)?;
    two_step.sup_distance(&one_step)
}

/// `(Q_{t+σ} f − Q_t f) / σ + L*(|∇ Q_t f|)` at every point, with the
/// nearest-shell slope.
pub fn hj_residual(
    f: &ScalarField,
    t: f64,
    sigma: f64,
    lagrangian: &PowerLagrangian,
    space: &FiniteMetricSpace,
) -> Result<Vec<f64>> {
    if !(t > 0.0) || !(sigma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            value: t.min(sigma),
            reason: "time and difference step must be positive",
        });
    }
    let qt = hopf_lax(f, t, lagrangian, space)?;
    let qts = hopf_lax(f, t + sigma, lagrangian, space)?;
    let slope = local_slope(&qt, space)?;
    qt.values()
        .iter()
        .zip(qts.values())
        .zip(&slope.values)
        .map(|((a, b), g)| Ok((b - a) / sigma + legendre(lagrangian, *g)?))
        .collect()
}

/// Measured space-time Lipschitz constant of `(t, x) ↦ Q_t f(x)` and its bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzBound {
    pub measured: f64,
    pub bound: f64,
}

/// Lipschitz constant of `Q_t f` on `times × X` for the metric
/// `|t − s| + d(x, y)`, against `max(Lip f, L*(Lip f))`.
pub fn hopf_lax_lipschitz_bound(
    f: &ScalarField,
    lagrangian: &PowerLagrangian,
    space: &FiniteMetricSpace,
    times: &[f64],
) -> Result<LipschitzBound> {
    if times.is_empty() {
        return Err(Error::Empty("time grid"));
    }
    let lip = lipschitz_constant(f, space)?;
    let bound = lip.max(legendre(lagrangian, lip)?);
    let layers = times
        .iter()
        .map(|&t| hopf_lax(f, t, lagrangian, space))
        .collect::<Result<Vec<_>>>()?;
    let n = space.len();
    let measured = (0..times.len() * n)
        .into_par_iter()
        .map(|a| {
            let (ta, x) = (a / n, a % n);
            let mut best: f64 = 0.0;
            for b in a + 1..times.len() * n {
                let (tb, y) = (b / n, b % n);
                let dist = (times[ta] - times[tb]).abs() + space.d(x, y);
                if dist > 0.0 {
                    let diff = (layers[ta].values()[x] - layers[tb].values()[y]).abs();
                    best = best.max(diff / dist);
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(LipschitzBound { measured, bound })
}
