//! Best constants for the Wasserstein control `(C_p)` and the gradient
//! estimate `(G_q)` of a Markov kernel, and the audits comparing them.
//!
//! `K_C(p) = max_{(x,y)} W_p(P_x, P_y) / d(x, y)` is the smallest `K` such that
//! `(C_p)` holds for Dirac pairs with `d̃ = K d`. `K_G(q)` is the smallest `K`
//! such that `|∇ Pf|(x) <= K (P(|∇ f|^q)(x))^{1/q}` over the function corpus,
//! with slopes measured on nearest-neighbour shells on both sides.

pub mod audit;
pub mod corpus;
pub mod sampled;

use rayon::prelude::*;

use crate::hopf_lax::{hopf_lax, PowerLagrangian};
use crate::kernels::MarkovKernel;
use crate::metric::FiniteMetricSpace;
use crate::slope::{lipschitz_constant, local_slope, ScalarField};
use crate::transport::{optimal_transport, Coupling};
use crate::{Error, Exponent, Result};

/// All pairs `x < y`.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|x| (x + 1..n).map(move |y| (x, y))).collect()
}

/// Pairs `(anchor, y)` for `y != anchor`; enough for translation-invariant
/// kernels on homogeneous spaces.
pub fn anchored_pairs(n: usize, anchor: usize) -> Vec<(usize, usize)> {
    (0..n).filter(|&y| y != anchor).map(|y| (anchor, y)).collect()
}

/// Pairs `(x, y)` with `y` in the nearest-neighbour shell of `x`.
pub fn shell_pairs(space: &FiniteMetricSpace) -> Vec<(usize, usize)> {
    (0..space.len())
        .flat_map(|x| {
            let r = space.nearest_distance(x);
            (0..space.len())
                .filter(move |&y| y != x && space.d(x, y) <= r * (1.0 + crate::slope::RADIUS_SLACK))
                .map(move |y| (x, y))
        })
        .collect()
}

/// Optimal transport between `P_x` and `P_y`.
#[derive(Clone, Debug)]
pub struct PairTransport {
    pub x: usize,
    pub y: usize,
    pub distance: f64,
    /// `W_p(P_x, P_y)`.
    pub w: f64,
    /// Largest distance charged by the optimal plan.
    pub support_radius: f64,
    pub plan: Coupling,
    /// Target-side Kantorovich potential (finite `p` only).
    pub potential: Option<ScalarField>,
}

impl PairTransport {
    pub fn ratio(&self) -> f64 {
        self.w / self.distance
    }
}

/// `W_p(P_x, P_y)` with its optimal plan for each pair, in input order.
pub fn pair_transports(
    kernel: &MarkovKernel,
    space: &FiniteMetricSpace,
    p: Exponent,
    pairs: &[(usize, usize)],
) -> Result<Vec<PairTransport>> {
    if kernel.len() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            found: kernel.len(),
        });
    }
    pairs
        .par_iter()
        .map(|&(x, y)| {
            let distance = space.d(x, y);
            if x == y || !(distance > 0.0) {
                return Err(Error::Malformed(format!(
                    "pair ({x}, {y}) does not consist of distinct points"
                )));
            }
            let a = kernel.rows().row(x).to_vec();
            let b = kernel.rows().row(y).to_vec();
            let sol = optimal_transport(&a, &b, space.dist(), p)?;
            let plan = Coupling::from_matrix(sol.plan);
            let support_radius = plan.support_max_distance(space.dist());
            let potential = match sol.potentials {
                Some((_, v)) => Some(ScalarField::new(v.iter().map(|t| -t).collect())?),
                None => None,
            };
            Ok(PairTransport {
                x,
                y,
                distance,
                w: sol.value,
                support_radius,
                plan,
                potential,
            })
        })
        .collect()
}

/// `K_C(p)` together with the per-pair transports it was computed from.
#[derive(Clone, Debug)]
pub struct CpEstimate {
    pub constant: f64,
    pub pairs: Vec<PairTransport>,
}

pub fn best_constant_cp(
    kernel: &MarkovKernel,
    space: &FiniteMetricSpace,
    p: Exponent,
    pairs: &[(usize, usize)],
) -> Result<CpEstimate> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair list"));
    }
    let transports = pair_transports(kernel, space, p, pairs)?;
    let constant = transports.iter().map(PairTransport::ratio).fold(0.0, f64::max);
    Ok(CpEstimate {
        constant,
        pairs: transports,
    })
}

/// One `(G_q)` term: `lhs = |∇ Pf|(x)`, `rhs = (P(|∇ f|^q)(x))^{1/q}`. For
/// `q = ∞` the point is `None` and both sides are global Lipschitz constants.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientTerm {
    pub field: usize,
    pub x: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

impl GradientTerm {
    pub fn ratio(&self) -> f64 {
        if self.lhs == 0.0 {
            0.0
        } else if self.rhs == 0.0 {
            f64::INFINITY
        } else {
            self.lhs / self.rhs
        }
    }

    /// Slack of `(G_q)` with `d̃ = K d`.
    pub fn margin(&self, k: f64) -> f64 {
        if self.lhs == 0.0 {
            return k * self.rhs;
        }
        k * self.rhs - self.lhs
    }
}

/// `(P(g^q)(x))^{1/q}` at every point, or the essential sup over `supp P_x`
/// when `q = ∞`.
pub fn kernel_lq_norm(kernel: &MarkovKernel, g: &[f64], q: Exponent) -> Vec<f64> {
    kernel
        .rows()
        .rows()
        .into_iter()
        .map(|row| match q {
            Exponent::Infinite => row
                .iter()
                .zip(g)
                .filter(|(w, _)| **w > 0.0)
                .map(|(_, v)| *v)
                .fold(0.0, f64::max),
            Exponent::Finite(q) => row
                .iter()
                .zip(g)
                .map(|(w, v)| w * v.powf(q))
                .sum::<f64>()
                .powf(1.0 / q),
        })
        .collect()
}

/// All `(G_q)` terms for one field.
pub fn gradient_terms(
    kernel: &MarkovKernel,
    space: &FiniteMetricSpace,
    q: Exponent,
    field: usize,
    f: &ScalarField,
) -> Result<Vec<GradientTerm>> {
    let pf = kernel.apply(f)?;
    Ok(match q {
        Exponent::Infinite => vec![GradientTerm {
            field,
            x: None,
            lhs: lipschitz_constant(&pf, space)?,
            rhs: lipschitz_constant(f, space)?,
        }],
        Exponent::Finite(_) => {
            let lhs = local_slope(&pf, space)?;
            let slope = local_slope(f, space)?;
            let rhs = kernel_lq_norm(kernel, &slope.values, q);
            (0..space.len())
                .map(|x| GradientTerm {
                    field,
                    x: Some(x),
                    lhs: lhs.values[x],
                    rhs: rhs[x],
                })
                .collect()
        }
    })
}

#[derive(Clone, Debug)]
pub struct GqEstimate {
    pub constant: f64,
    pub terms: Vec<GradientTerm>,
}

/// `K_G(q)` over a corpus.
pub fn best_constant_gq(
    kernel: &MarkovKernel,
    space: &FiniteMetricSpace,
    q: Exponent,
    corpus: &[ScalarField],
) -> Result<GqEstimate> {
    if corpus.is_empty() {
        return Err(Error::Empty("function corpus"));
    }
    let non_constant = corpus.iter().any(|f| f.max() > f.min());
    if !non_constant {
        return Err(Error::Degenerate("corpus contains only constant fields"));
    }
    let terms: Vec<GradientTerm> = corpus
        .par_iter()
        .enumerate()
        .map(|(k, f)| gradient_terms(kernel, space, q, k, f))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let constant = terms.iter().map(GradientTerm::ratio).fold(0.0, f64::max);
    Ok(GqEstimate { constant, terms })
}

/// Slack of `(C_p)` for one Dirac pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMargin {
    pub x: usize,
    pub y: usize,
    pub w: f64,
    pub margin: f64,
}

/// Side-by-side constants for one exponent pair `(p, q)`.
#[derive(Clone, Debug)]
pub struct DualityReport {
    pub p: Exponent,
    pub q: Exponent,
    pub k_c: f64,
    pub k_g: f64,
    /// `K_C d(x, y) − W_p(P_x, P_y)`.
    pub pair_margins: Vec<PairMargin>,
    /// `(G_q)` terms with margins taken at `K_G`.
    pub fn_margins: Vec<(GradientTerm, f64)>,
    pub mesh: f64,
    /// Confidence half-width for sampled kernels.
    pub mc_ci: Option<f64>,
    /// Largest reconstruction error of the derivative chain along geodesics.
    pub chain_error: f64,
}

impl DualityReport {
    pub fn gap(&self) -> f64 {
        (self.k_c - self.k_g).abs()
    }

    pub fn within(&self, tol: f64) -> bool {
        self.gap() <= tol + self.mc_ci.unwrap_or(0.0)
    }
}

/// Computes `K_C(p)` and `K_G(q)` and the chain diagnostic.
pub fn duality_gap_report(
    kernel: &MarkovKernel,
    space: &FiniteMetricSpace,
    p: Exponent,
    pairs: &[(usize, usize)],
    corpus: &[ScalarField],
) -> Result<DualityReport> {
    let q = p.conjugate();
    let cp = best_constant_cp(kernel, space, p, pairs)?;
    let gq = best_constant_gq(kernel, space, q, corpus)?;
    let pair_margins = cp
        .pairs
        .iter()
        .map(|t| PairMargin {
            x: t.x,
            y: t.y,
            w: t.w,
            margin: cp.constant * t.distance - t.w,
        })
        .collect();
    let fn_margins = gq
        .terms
        .iter()
        .map(|t| (t.clone(), t.margin(gq.constant)))
        .collect();

    let lagrangian = PowerLagrangian::new(match p {
        Exponent::Finite(v) if v > 1.0 => v,
        _ => 2.0,
    })?;
    let mut chain_error: f64 = 0.0;
    for &(x, y) in pairs.iter().take(4) {
        for f in corpus.iter().take(4) {
            let c = fundamental_chain(kernel, space, &lagrangian, f, x, y, 64)?;
            chain_error = chain_error.max(c.error);
        }
    }
    Ok(DualityReport {
        p,
        q,
        k_c: cp.constant,
        k_g: gq.constant,
        pair_margins,
        fn_margins,
        mesh: space.mesh(),
        mc_ci: None,
        chain_error,
    })
}

/// `φ(s) = P Q_s f(γ_s)` along a discrete geodesic from `y` to `x`,
/// differentiated numerically and integrated back.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainDiagnostic {
    /// `PQ_1 f(x) − Pf(y)`.
    pub direct: f64,
    /// Trapezoid integral of the finite-difference derivative.
    pub reconstructed: f64,
    pub error: f64,
}

pub fn fundamental_chain(
    kernel: &MarkovKernel,
    space: &FiniteMetricSpace,
    lagrangian: &PowerLagrangian,
    f: &ScalarField,
    x: usize,
    y: usize,
    grid: usize,
) -> Result<ChainDiagnostic> {
    let grid = grid.max(2);
    let path = space.minimal_geodesic(y, x)?;
    let params = path.parameters();
    let vertex_at = |s: f64| {
        let k = params
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - s).abs().total_cmp(&(b.1 - s).abs()))
            .map(|(k, _)| k)
            .unwrap_or(0);
        path.vertices[k]
    };
    let h = 1.0 / grid as f64;
    let phi = (0..=grid)
        .map(|k| {
            let s = k as f64 * h;
            let q = hopf_lax(f, s, lagrangian, space)?;
            let pq = kernel.apply(&q)?;
            Ok(pq.values()[vertex_at(s)])
        })
        .collect::<Result<Vec<f64>>>()?;
    let deriv: Vec<f64> = (0..=grid)
        .map(|k| {
            if k == 0 {
                (phi[1] - phi[0]) / h
            } else if k == grid {
                (phi[grid] - phi[grid - 1]) / h
            } else {
                (phi[k + 1] - phi[k - 1]) / (2.0 * h)
            }
        })
        .collect();
    let reconstructed: f64 = deriv.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum();
    let direct = phi[grid] - phi[0];
    Ok(ChainDiagnostic {
        direct,
        reconstructed,
        error: (direct - reconstructed).abs(),
    })
}
