//! Carnot-Carathéodory length estimates on the Heisenberg group.
//!
//! Horizontal paths are piecewise linear in the plane: segment `k` moves by
//! `(a_k, b_k)` and, starting from `(X_k, Y_k)`, adds `½(X_k b_k − Y_k a_k)` to
//! the area coordinate. The upper estimate minimises `Σ |(a_k, b_k)|` subject
//! to hitting the target, alternating min-norm Newton projections onto the
//! endpoint constraint with projected-gradient steps on the length.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::{group_mul, koranyi_gauge, Step2Point};
use crate::{Error, Result};

/// Endpoint residual accepted as "on target".
const ENDPOINT_TOL: f64 = 1e-11;
const MAX_NEWTON: usize = 50;
const MAX_DESCENT: usize = 4000;
const CALIBRATION_RESOLUTION: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CcEstimate {
    pub lower: f64,
    pub upper: f64,
    /// Calibration ratio `max gauge / upper` used for `lower`.
    pub c_upper: f64,
    /// `false` when refinement stopped on the iteration cap.
    pub converged: bool,
}

fn endpoint(u: &[(f64, f64)]) -> [f64; 3] {
    let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
    for &(a, b) in u {
        z += 0.5 * (x * b - y * a);
        x += a;
        y += b;
    }
    [x, y, z]
}

fn length(u: &[(f64, f64)]) -> f64 {
    u.iter().map(|(a, b)| a.hypot(*b)).sum()
}

/// Rows `∂(X, Y, z)/∂(a_m, b_m)` flattened as `[a_0, b_0, a_1, b_1, ...]`.
fn jacobian(u: &[(f64, f64)]) -> [Vec<f64>; 3] {
    let n = u.len();
    let mut jx = vec![0.0; 2 * n];
    let mut jy = vec![0.0; 2 * n];
    let mut jz = vec![0.0; 2 * n];
    let (tail_a, tail_b): (f64, f64) = u.iter().fold((0.0, 0.0), |s, (a, b)| (s.0 + a, s.1 + b));
    let (mut xb, mut yb) = (0.0, 0.0);
    let (mut after_a, mut after_b) = (tail_a, tail_b);
    for (m, &(a, b)) in u.iter().enumerate() {
        after_a -= a;
        after_b -= b;
        jx[2 * m] = 1.0;
        jy[2 * m + 1] = 1.0;
        jz[2 * m] = 0.5 * (after_b - yb);
        jz[2 * m + 1] = 0.5 * (xb - after_a);
        xb += a;
        yb += b;
    }
    [jx, jy, jz]
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][c] = r[row];
        }
        *slot = (mc[0][0] * (mc[1][1] * mc[2][2] - mc[1][2] * mc[2][1])
            - mc[0][1] * (mc[1][0] * mc[2][2] - mc[1][2] * mc[2][0])
            + mc[0][2] * (mc[1][0] * mc[2][1] - mc[1][1] * mc[2][0]))
            / det;
    }
    Some(out)
}

/// `v − Jᵀ (J Jᵀ)⁻¹ (J v − r)` applied as a correction of size `Jᵀ λ`.
fn min_norm_correction(j: &[Vec<f64>; 3], residual: [f64; 3]) -> Option<Vec<f64>> {
    let mut g = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            g[a][b] = j[a].iter().zip(&j[b]).map(|(p, q)| p * q).sum();
        }
    }
    let lambda = solve3(g, residual)?;
    Some(
        (0..j[0].len())
            .map(|k| lambda[0] * j[0][k] + lambda[1] * j[1][k] + lambda[2] * j[2][k])
            .collect(),
    )
}

fn project(u: &mut [(f64, f64)], target: [f64; 3]) -> bool {
    for _ in 0..MAX_NEWTON {
        let e = endpoint(u);
        let r = [e[0] - target[0], e[1] - target[1], e[2] - target[2]];
        let scale = 1.0 + target.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if r.iter().all(|v| v.abs() <= ENDPOINT_TOL * scale) {
            return true;
        }
        let Some(step) = min_norm_correction(&jacobian(u), r) else {
            return false;
        };
        for (m, seg) in u.iter_mut().enumerate() {
            seg.0 -= step[2 * m];
            seg.1 -= step[2 * m + 1];
        }
    }
    false
}

fn length_gradient(u: &[(f64, f64)]) -> Vec<f64> {
    let mut g = Vec::with_capacity(2 * u.len());
    for &(a, b) in u {
        let r = a.hypot(b).max(1e-14);
        g.push(a / r);
        g.push(b / r);
    }
    g
}

/// Tangential part of `v` with respect to the constraint rows.
fn tangential(j: &[Vec<f64>; 3], v: &[f64]) -> Option<Vec<f64>> {
    let jv = [0, 1, 2].map(|r| j[r].iter().zip(v).map(|(p, q)| p * q).sum::<f64>());
    let normal = min_norm_correction(j, jv)?;
    Some(v.iter().zip(normal).map(|(a, b)| a - b).collect())
}

fn initial_guess(target: [f64; 3], segments: usize, phase: f64, orientation: f64) -> Vec<(f64, f64)> {
    let drift = (target[0] / segments as f64, target[1] / segments as f64);
    // A regular polygon of perimeter ℓ encloses area ℓ² / (4N tan(π/N)).
    let n = segments as f64;
    let perimeter = (4.0 * n * (PI / n).tan() * target[2].abs()).sqrt();
    let side = perimeter / n;
    let sign = if target[2] < 0.0 {
        -orientation
    } else {
        orientation
    };
    (0..segments)
        .map(|k| {
            let theta = phase + sign * 2.0 * PI * k as f64 / n;
            (drift.0 + side * theta.cos(), drift.1 + side * theta.sin())
        })
        .collect()
}

fn refine(mut u: Vec<(f64, f64)>, target: [f64; 3]) -> Option<(f64, bool)> {
    if !project(&mut u, target) {
        return None;
    }
    let mut best = length(&u);
    let mut step = 0.1 * best.max(1e-3) / u.len() as f64;
    for _ in 0..MAX_DESCENT {
        let j = jacobian(&u);
        let g = tangential(&j, &length_gradient(&u))?;
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-10 {
            return Some((best, true));
        }
        let mut improved = false;
        while step > 1e-15 * best.max(1.0) {
            let mut trial: Vec<(f64, f64)> = u
                .iter()
                .enumerate()
                .map(|(m, &(a, b))| (a - step * g[2 * m] / gnorm, b - step * g[2 * m + 1] / gnorm))
                .collect();
            if project(&mut trial, target) {
                let l = length(&trial);
                if l < best {
                    let gain = best - l;
                    best = l;
                    u = trial;
                    step *= 1.5;
                    improved = true;
                    if gain <= 1e-13 * best {
                        return Some((best, true));
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            return Some((best, true));
        }
    }
    Some((best, false))
}

/// Best horizontal length found from the origin to `target` using
/// `resolution` segments; returns `(length, converged)`.
pub fn cc_upper_from_origin(target: &Step2Point, resolution: usize) -> Result<(f64, bool)> {
    if target.n() != 2 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: target.n() as f64,
            reason: "Carnot-Carathéodory estimation is implemented for the Heisenberg group",
        });
    }
    if resolution < 3 {
        return Err(Error::InvalidParameter {
            name: "resolution",
            value: resolution as f64,
            reason: "at least three segments are needed to generate area",
        });
    }
    let t = [target.x[0], target.x[1], target.z[0]];
    if t.iter().all(|v| *v == 0.0) {
        return Ok((0.0, true));
    }
    let mut best: Option<(f64, bool)> = None;
    for phase in [0.0, 0.5 * PI, PI, 1.5 * PI] {
        for orientation in [1.0, -1.0] {
            let u = initial_guess(t, resolution, phase + (t[1].atan2(t[0])), orientation);
            if let Some(found) = refine(u, t) {
                if best.is_none_or(|b| found.0 < b.0) {
                    best = Some(found);
                }
            }
            if t[2] == 0.0 {
                break;
            }
        }
    }
    best.ok_or(Error::Degenerate("no horizontal path reached the target"))
}

/// Largest `gauge / upper` over points of the unit gauge sphere. By dilation
/// and rotation invariance the ratio depends only on the split between the
/// horizontal and vertical parts.
pub fn gauge_cc_ratio() -> f64 {
    static RATIO: OnceLock<f64> = OnceLock::new();
    *RATIO.get_or_init(|| {
        let o = Step2Point::identity(2);
        (0..=8)
            .filter_map(|k| {
                let phi = 0.5 * PI * k as f64 / 8.0;
                let p = Step2Point::heisenberg(phi.cos().sqrt(), 0.0, phi.sin());
                let (upper, _) = cc_upper_from_origin(&p, CALIBRATION_RESOLUTION).ok()?;
                Some(koranyi_gauge(&o, &p).ok()? / upper)
            })
            .fold(0.0, f64::max)
    })
}

/// Two-sided estimate of the Carnot-Carathéodory distance between `a` and `b`.
pub fn cc_distance_estimate(a: &Step2Point, b: &Step2Point, resolution: usize) -> Result<CcEstimate> {
    let target = group_mul(&a.inverse(), b)?;
    let (upper, converged) = cc_upper_from_origin(&target, resolution)?;
    let c_upper = gauge_cc_ratio();
    let gauge = koranyi_gauge(a, b)?;
    let lower = if gauge == 0.0 {
        0.0
    } else {
        (gauge / c_upper).min(upper)
    };
    Ok(CcEstimate {
        lower,
        upper,
        c_upper,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_and_jacobian() {
        let u = vec![(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        assert_eq!(endpoint(&u), [0.0, 0.0, 1.0]);
        let j = jacobian(&u);
        let h = 1e-6;
        for m in 0..8 {
            let mut up = u.clone();
            if m % 2 == 0 {
                up[m / 2].0 += h;
            } else {
                up[m / 2].1 += h;
            }
            let fd = (endpoint(&up)[2] - endpoint(&u)[2]) / h;
            assert!((fd - j[2][m]).abs() < 1e-5, "m={m}");
        }
    }

    #[test]
    fn trivial_and_horizontal() {
        let a = Step2Point::heisenberg(0.3, 0.2, 0.1);
        let e = cc_distance_estimate(&a, &a, 16).unwrap();
        assert_eq!((e.lower, e.upper), (0.0, 0.0));

        let o = Step2Point::identity(2);
        let e = cc_distance_estimate(&o, &Step2Point::heisenberg(1.0, 0.0, 0.0), 16).unwrap();
        assert!((e.upper - 1.0).abs() < 1e-9);
        assert!(e.lower <= e.upper);
    }

    #[test]
    fn vertical_scales_like_square_root() {
        let o = Step2Point::identity(2);
        let ratios: Vec<f64> = [0.25, 1.0, 4.0]
            .iter()
            .map(|&z| {
                let e = cc_distance_estimate(&o, &Step2Point::heisenberg(0.0, 0.0, z), 16).unwrap();
                assert!(e.lower <= e.upper);
                e.upper / z.sqrt()
            })
            .collect();
        for r in &ratios {
            assert!((r / ratios[1] - 1.0).abs() < 0.05);
            // The circle enclosing area z has perimeter 2√(πz).
            assert!((r - 2.0 * PI.sqrt()).abs() / (2.0 * PI.sqrt()) < 0.01);
        }
    }

    #[test]
    fn upper_dominates_lower_generic() {
        let a = Step2Point::heisenberg(0.2, -0.4, 0.3);
        let b = Step2Point::heisenberg(1.0, 0.5, -0.6);
        let e = cc_distance_estimate(&a, &b, 16).unwrap();
        assert!(e.c_upper > 0.0 && e.lower <= e.upper);
        let planar = (0.8f64).hypot(0.9);
        assert!(e.upper >= planar - 1e-12);
        assert!(cc_upper_from_origin(&Step2Point::identity(3), 16).is_err());
    }
}
