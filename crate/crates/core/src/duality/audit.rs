//! Consistency audits relating `(C_p)`, `(G_q)` and the transport plans.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{kernel_lq_norm, pair_transports, shell_pairs, PairTransport};
use crate::kernels::MarkovKernel;
use crate::metric::FiniteMetricSpace;
use crate::slope::{local_slope, slope_at_scale, ScalarField};
use crate::transport::{glue_couplings, optimal_transport, Coupling, DiscreteMeasure};
use crate::{Error, Exponent, Result};

/// Absolute tolerance for monotonicity in `p`.
pub const MONOTONE_TOL: f64 = 1e-10;

/// Slack of one audited inequality at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMargin {
    pub field: usize,
    pub x: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

fn min_margin(margins: &[PointMargin]) -> f64 {
    margins.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug)]
pub struct ImplicationAudit {
    pub k_c: f64,
    /// For each `(f, x)`: the smallest slack over the nearest-neighbour shell
    /// of `K_C ‖G_R f‖_{L^q(P_x)} − |Pf(x) − Pf(y)| / d(x, y)`, where `R` is the
    /// support radius of the optimal plan between `P_x` and `P_y`.
    pub margins: Vec<PointMargin>,
    pub min_margin: f64,
    /// Largest `R − K_C d(x, y)` over shell pairs; only meaningful for `p = ∞`.
    pub support_excess: f64,
    /// Largest `W_p(P_x, P_y) / d(x, y)` over shell pairs.
    pub shell_ratio: f64,
}

impl ImplicationAudit {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_margin >= -tol && self.shell_ratio <= self.k_c + tol
    }
}

/// Checks that `(C_p)` with constant `k_c` yields `(G_q)` through the optimal
/// plans on every nearest-neighbour pair.
pub fn implication_audit(
    kernel: &MarkovKernel,
    space: &FiniteMetricSpace,
    p: Exponent,
    corpus: &[ScalarField],
    k_c: f64,
) -> Result<ImplicationAudit> {
    let q = p.conjugate();
    let pairs = shell_pairs(space);
    let transports = pair_transports(kernel, space, p, &pairs)?;
    let mut by_x: BTreeMap<usize, Vec<&PairTransport>> = BTreeMap::new();
    for t in &transports {
        by_x.entry(t.x).or_default().push(t);
    }
    let shell_ratio = transports.iter().map(PairTransport::ratio).fold(0.0, f64::max);
    let support_excess = transports
        .iter()
        .map(|t| t.support_radius - k_c * t.distance)
        .fold(f64::NEG_INFINITY, f64::max);

    let margins: Vec<PointMargin> = corpus
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let pf = kernel.apply(f)?;
            let mut out = Vec::with_capacity(space.len());
            let mut cache: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            for (&x, shell) in &by_x {
                let mut worst = PointMargin {
                    field: k,
                    x,
                    lhs: 0.0,
                    rhs: 0.0,
                    margin: f64::INFINITY,
                };
                for t in shell {
                    let lhs = (pf.values()[x] - pf.values()[t.y]).abs() / t.distance;
                    let norm = if t.support_radius > 0.0 {
                        let g = match cache.get(&t.support_radius.to_bits()) {
                            Some(g) => g.clone(),
                            None => {
                                let g = kernel_lq_norm(
                                    kernel,
                                    &slope_at_scale(f, space, t.support_radius)?.values,
                                    q,
                                );
                                cache.insert(t.support_radius.to_bits(), g.clone());
                                g
                            }
                        };
                        g[x]
                    } else {
                        0.0
                    };
                    let rhs = k_c * norm;
                    if rhs - lhs < worst.margin {
                        worst = PointMargin {
                            field: k,
                            x,
                            lhs,
                            rhs,
                            margin: rhs - lhs,
                        };
                    }
                }
                out.push(worst);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(ImplicationAudit {
        k_c,
        min_margin: min_margin(&margins),
        margins,
        support_excess,
        shell_ratio,
    })
}

#[derive(Clone, Debug)]
pub struct GInftyPrimeCheck {
    pub k: f64,
    /// `sup_{supp P_x} |∇ f| − |∇ Pf|(x) / K` per `(f, x)`.
    pub margins: Vec<PointMargin>,
    /// Points with a negative margin.
    pub counterexamples: Vec<PointMargin>,
}

/// Tests `|∇ Pf|(x) <= K · ess-sup_{P_x} |∇ f|` on the corpus.
pub fn g_infty_prime_check(
    kernel: &MarkovKernel,
    space: &FiniteMetricSpace,
    corpus: &[ScalarField],
    k: f64,
    tol: f64,
) -> Result<GInftyPrimeCheck> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter {
            name: "k",
            value: k,
            reason: "constant must be positive",
        });
    }
    let mut margins = Vec::new();
    for (idx, f) in corpus.iter().enumerate() {
        let lhs = local_slope(&kernel.apply(f)?, space)?;
        let slope = local_slope(f, space)?;
        let sup = kernel_lq_norm(kernel, &slope.values, Exponent::Infinite);
        for x in 0..space.len() {
            margins.push(PointMargin {
                field: idx,
                x,
                lhs: lhs.values[x] / k,
                rhs: sup[x],
                margin: sup[x] - lhs.values[x] / k,
            });
        }
    }
    let counterexamples = margins.iter().filter(|m| m.margin < -tol).cloned().collect();
    Ok(GInftyPrimeCheck {
        k,
        margins,
        counterexamples,
    })
}

/// Bound `|Pf(x) − Pf(y)| <= ‖G_r f‖_{L^q(P_x)} d̃ + 2‖f‖_∞ d̃^{1 + (p−1)/2}`
/// with `d̃ = W_p(P_x, P_y)` and `r = d̃^{1/(2q)}`.
#[derive(Clone, Debug)]
pub struct ChebyshevSplit {
    pub margins: Vec<PointMargin>,
    pub min_margin: f64,
}

pub fn chebyshev_split_check(
    kernel: &MarkovKernel,
    space: &FiniteMetricSpace,
    p: f64,
    pairs: &[(usize, usize)],
    corpus: &[ScalarField],
) -> Result<ChebyshevSplit> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter {
            name: "p",
            value: p,
            reason: "split bound needs a finite exponent >= 1",
        });
    }
    let q = Exponent::Finite(p).conjugate();
    let inv_2q = match q {
        Exponent::Infinite => 0.0,
        Exponent::Finite(q) => 1.0 / (2.0 * q),
    };
    let transports = pair_transports(kernel, space, Exponent::Finite(p), pairs)?;
    let mut margins = Vec::new();
    for (idx, f) in corpus.iter().enumerate() {
        let pf = kernel.apply(f)?;
        let sup_norm = f.max().abs().max(f.min().abs());
        for t in &transports {
            let lhs = (pf.values()[t.x] - pf.values()[t.y]).abs();
            let dt = t.w;
            let rhs = if dt > 0.0 {
                let r = dt.powf(inv_2q);
                let g = slope_at_scale(f, space, r)?;
                kernel_lq_norm(kernel, &g.values, q)[t.x] * dt
                    + 2.0 * sup_norm * dt.powf(1.0 + (p - 1.0) / 2.0)
            } else {
                0.0
            };
            margins.push(PointMargin {
                field: idx,
                x: t.x,
                lhs,
                rhs,
                margin: rhs - lhs,
            });
        }
    }
    Ok(ChebyshevSplit {
        min_margin: min_margin(&margins),
        margins,
    })
}

/// Gluing of an optimal `π ∈ Π(μ, ν)` with optimal plans between kernel rows.
#[derive(Clone, Debug, PartialEq)]
pub struct GluingCheck {
    /// `W_p(P*μ, P*ν)`.
    pub lhs: f64,
    /// `(Σ π(x, y) W_p(P_x, P_y)^p)^{1/p}`.
    pub rhs: f64,
    /// Cost of the glued plan, `(∫ d^p dπ̃)^{1/p}`.
    pub glued_cost: f64,
    /// `|glued_cost^p − rhs^p|`.
    pub identity_defect: f64,
    /// Largest marginal error of the glued plan.
    pub marginal_defect: f64,
}

pub fn gluing_check(
    kernel: &MarkovKernel,
    space: &FiniteMetricSpace,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
) -> Result<GluingCheck> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter {
            name: "p",
            value: p,
            reason: "gluing check needs a finite exponent >= 1",
        });
    }
    let e = Exponent::Finite(p);
    let outer = optimal_transport(mu.weights(), nu.weights(), space.dist(), e)?;
    let pi = Coupling::from_matrix(outer.plan);
    let support: Vec<(usize, usize)> = pi.triples().iter().map(|&(x, y, _)| (x, y)).collect();
    let mut family = BTreeMap::new();
    let mut inner = BTreeMap::new();
    let off_diagonal: Vec<(usize, usize)> = support.iter().copied().filter(|(x, y)| x != y).collect();
    for t in pair_transports(kernel, space, e, &off_diagonal)? {
        inner.insert((t.x, t.y), t.w);
        family.insert((t.x, t.y), t.plan);
    }
    for &(x, y) in support.iter().filter(|(x, y)| x == y) {
        let row = kernel.rows().row(x);
        let mut diag = ndarray::Array2::zeros((space.len(), space.len()));
        for (u, &w) in row.iter().enumerate() {
            diag[[u, u]] = w;
        }
        inner.insert((x, y), 0.0);
        family.insert((x, y), Coupling::from_matrix(diag));
    }
    let glued = glue_couplings(&pi, &family)?;
    let rhs_p: f64 = pi
        .triples()
        .iter()
        .map(|&(x, y, m)| m * inner[&(x, y)].powf(p))
        .sum();
    let glued_p = glued.lp_cost(space.dist(), p);

    let pmu = kernel.adjoint_apply(mu)?;
    let pnu = kernel.adjoint_apply(nu)?;
    let lhs = optimal_transport(pmu.weights(), pnu.weights(), space.dist(), e)?.value;
    let marginal_defect = glued
        .row_marginal()
        .iter()
        .zip(pmu.weights())
        .chain(glued.col_marginal().iter().zip(pnu.weights()))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(GluingCheck {
        lhs,
        rhs: rhs_p.powf(1.0 / p),
        glued_cost: glued_p.powf(1.0 / p),
        identity_defect: (glued_p - rhs_p).abs(),
        marginal_defect,
    })
}

#[derive(Clone, Debug)]
pub struct MonotonicityAudit {
    pub p_list: Vec<Exponent>,
    pub pairs: Vec<(usize, usize)>,
    /// `W_p(P_x, P_y)` indexed `[pair][p]`.
    pub values: Vec<Vec<f64>>,
    /// `K_C(p)` per exponent.
    pub constants: Vec<f64>,
    /// Largest decrease of `W_p` along the list over all pairs.
    pub worst_pair_drop: f64,
    /// Largest decrease of `K_C` along the list.
    pub worst_constant_drop: f64,
}

impl MonotonicityAudit {
    pub fn monotone(&self) -> bool {
        self.worst_pair_drop <= MONOTONE_TOL && self.worst_constant_drop <= MONOTONE_TOL
    }
}

/// `W_p(P_x, P_y)` and `K_C(p)` across an increasing list of exponents.
pub fn monotonicity_audit(
    kernel: &MarkovKernel,
    space: &FiniteMetricSpace,
    pairs: &[(usize, usize)],
    p_list: &[Exponent],
) -> Result<MonotonicityAudit> {
    if p_list.is_empty() {
        return Err(Error::Empty("exponent list"));
    }
    if p_list.windows(2).any(|w| w[1].value() <= w[0].value()) {
        return Err(Error::Malformed(
            "exponent list must be strictly increasing".into(),
        ));
    }
    let per_p = p_list
        .iter()
        .map(|&p| pair_transports(kernel, space, p, pairs))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<Vec<f64>> = (0..pairs.len())
        .map(|k| per_p.iter().map(|ts| ts[k].w).collect())
        .collect();
    let constants: Vec<f64> = per_p
        .iter()
        .map(|ts| ts.iter().map(PairTransport::ratio).fold(0.0, f64::max))
        .collect();
    let drop = |v: &[f64]| v.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    Ok(MonotonicityAudit {
        p_list: p_list.to_vec(),
        pairs: pairs.to_vec(),
        worst_pair_drop: values.iter().map(|v| drop(v)).fold(0.0, f64::max),
        worst_constant_drop: drop(&constants),
        values,
        constants,
    })
}
