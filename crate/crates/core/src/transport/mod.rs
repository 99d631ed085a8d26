//! Discrete optimal transport.
//!
//! `W_p` for finite `p` is solved exactly with the transportation simplex in
//! [`simplex`]; `W_∞` is a bottleneck problem solved by binary search over the
//! distinct distances with a max-flow feasibility test ([`bottleneck`]).
//! Points carrying no mass are dropped before solving and reinserted as zero
//! rows/columns of the plan.

pub mod bottleneck;
pub mod maxflow;
pub mod simplex;

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::ensure_len;
use crate::metric::FiniteMetricSpace;
use crate::slope::{lipschitz_constant, ScalarField};
use crate::{Error, Exponent, Result};

/// Tolerance on the total mass of a [`DiscreteMeasure`].
pub const MASS_TOL: f64 = 1e-12;
/// Tolerance on coupling marginals.
pub const MARGINAL_TOL: f64 = 1e-10;
/// Exponents above this are treated as `∞` (double-precision range of `d^p`).
pub const P_SWITCH_TO_INF: f64 = 300.0;
/// Above this exponent costs are normalised by `W_∞` instead of the diameter.
const P_NORMALISE_BY_BOTTLENECK: f64 = 8.0;
/// Normalised costs are clamped here to keep potentials well conditioned.
const COST_CAP: f64 = 1e6;

/// Probability weights over the points of a finite space.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("measure has no points"));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::Malformed(format!("weight {i} is {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Malformed(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { weights })
    }

    /// Normalises nonnegative masses to a probability vector.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Degenerate("masses must have positive finite total"));
        }
        Self::new(masses.iter().map(|m| m / total).collect())
    }

    pub fn dirac(n: usize, x: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[x] = 1.0;
        Self { weights }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    /// `∫ f dμ`.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        self.weights.iter().zip(f.values()).map(|(w, v)| w * v).sum()
    }
}

/// Joint distribution on `X × X`, rows indexed by the source point.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    matrix: Array2<f64>,
}

impl Coupling {
    /// Validates nonnegativity and both marginals.
    pub fn new(matrix: Array2<f64>, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        ensure_len(mu.len(), matrix.nrows())?;
        ensure_len(nu.len(), matrix.ncols())?;
        if matrix.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Malformed(
                "coupling has a negative or non-finite entry".into(),
            ));
        }
        let c = Self { matrix };
        let rows = c.row_marginal();
        let cols = c.col_marginal();
        let bad_row = rows
            .iter()
            .zip(mu.weights())
            .any(|(a, b)| (a - b).abs() > MARGINAL_TOL);
        let bad_col = cols
            .iter()
            .zip(nu.weights())
            .any(|(a, b)| (a - b).abs() > MARGINAL_TOL);
        if bad_row || bad_col {
            return Err(Error::Malformed("coupling marginals do not match".into()));
        }
        Ok(c)
    }

    pub(crate) fn from_matrix(matrix: Array2<f64>) -> Self {
        Self { matrix }
    }

    /// `δ_(x, y)` on an `n`-point space.
    pub fn dirac(n: usize, x: usize, y: usize) -> Self {
        let mut matrix = Array2::zeros((n, n));
        matrix[[x, y]] = 1.0;
        Self { matrix }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.matrix[[x, y]]
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.matrix.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        self.matrix.columns().into_iter().map(|c| c.sum()).collect()
    }

    /// `‖d‖^p_{L^p(π)} = Σ π(x, y) d(x, y)^p`.
    pub fn lp_cost(&self, dist: &Array2<f64>, p: f64) -> f64 {
        self.matrix
            .iter()
            .zip(dist.iter())
            .filter(|(m, _)| **m > 0.0)
            .map(|(m, d)| m * d.powf(p))
            .sum()
    }

    /// `‖d‖_{L^∞(π)}`: largest distance charged by the coupling.
    pub fn support_max_distance(&self, dist: &Array2<f64>) -> f64 {
        self.matrix
            .iter()
            .zip(dist.iter())
            .filter(|(m, _)| **m > 0.0)
            .map(|(_, d)| *d)
            .fold(0.0, f64::max)
    }

    /// Sparse `(i, j, mass)` triples of the positive entries.
    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        self.matrix
            .indexed_iter()
            .filter(|(_, m)| **m > 0.0)
            .map(|((i, j), m)| (i, j, *m))
            .collect()
    }
}

/// A Kantorovich pair: `f` on the target side and its c-transform
/// `f*(x) = min_y f(y) + d(x, y)^p` on the source side.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPotentials {
    pub f: ScalarField,
    pub f_star: ScalarField,
    pub p: f64,
}

/// Optimal value and plan of a transport problem over a finite space.
#[derive(Clone, Debug)]
pub struct WassersteinSolution {
    pub value: f64,
    pub plan: Coupling,
    /// Present for finite exponents solved by the simplex.
    pub potentials: Option<DualPotentials>,
}

/// Raw solution on a rectangular cost, used for point clouds.
#[derive(Clone, Debug)]
pub struct TransportSolution {
    pub value: f64,
    pub plan: Array2<f64>,
    /// Row and column potentials in units of `d^p`, `v[0] = 0`
    /// (finite `p` only).
    pub potentials: Option<(Vec<f64>, Vec<f64>)>,
    pub pivots: usize,
}

/// Optimal transport between `a` (rows) and `b` (columns) for the cost
/// `dist^p` (or the bottleneck cost when `p = ∞`).
pub fn optimal_transport(a: &[f64], b: &[f64], dist: &Array2<f64>, p: Exponent) -> Result<TransportSolution> {
    let (m, n) = dist.dim();
    ensure_len(m, a.len())?;
    ensure_len(n, b.len())?;
    if let Exponent::Finite(p) = p {
        Exponent::finite(p)?;
    }
    for &w in a.iter().chain(b) {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Malformed(format!("transport mass {w} is invalid")));
        }
    }
    if dist.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::Malformed(
            "transport distances must be finite and nonnegative".into(),
        ));
    }
    let rows: Vec<usize> = (0..m).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| b[j] > 0.0).collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::Degenerate("a marginal has no mass"));
    }
    let sa: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let sb: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
    let (mm, nn) = (rows.len(), cols.len());
    let sub: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| dist[[i, j]]))
        .collect();

    let finite_p = match p {
        Exponent::Finite(p) if p <= P_SWITCH_TO_INF => Some(p),
        _ => None,
    };

    let Some(p) = finite_p else {
        let (value, flat) = bottleneck::solve(&sa, &sb, &sub)?;
        return Ok(TransportSolution {
            value,
            plan: expand(&flat, &rows, &cols, m, n),
            potentials: None,
            pivots: 0,
        });
    };

    let mut scale = if p > P_NORMALISE_BY_BOTTLENECK {
        bottleneck::solve(&sa, &sb, &sub)?.0
    } else {
        sub.iter().copied().fold(0.0, f64::max)
    };
    if scale == 0.0 {
        scale = 1.0;
    }
    let normalised: Vec<f64> = sub.iter().map(|d| (d / scale).powf(p)).collect();
    let cost: Vec<f64> = normalised.iter().map(|c| c.min(COST_CAP)).collect();
    let sol = simplex::solve(&sa, &sb, &cost, simplex::SimplexOptions::default())?;

    let mut flat = vec![0.0; mm * nn];
    for &(i, j, f) in &sol.basis {
        flat[i * nn + j] = f;
    }
    let normalised_value: f64 = flat.iter().zip(&normalised).map(|(f, c)| f * c).sum();
    let value = scale * normalised_value.max(0.0).powf(1.0 / p);

    let unit = scale.powf(p);
    let potentials = if unit.is_finite() && unit > 0.0 {
        let (u, v) = full_potentials(&sol.u, &sol.v, &rows, &cols, dist, scale, p);
        Some((
            u.iter().map(|x| x * unit).collect(),
            v.iter().map(|x| x * unit).collect(),
        ))
    } else {
        None
    };

    Ok(TransportSolution {
        value,
        plan: expand(&flat, &rows, &cols, m, n),
        potentials,
        pivots: sol.pivots,
    })
}

fn expand(flat: &[f64], rows: &[usize], cols: &[usize], m: usize, n: usize) -> Array2<f64> {
    let mut plan = Array2::zeros((m, n));
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            plan[[i, j]] = flat[a * cols.len() + b];
        }
    }
    plan
}

/// Extends active-row/column potentials to every point (keeping
/// `u_i + v_j <= c_ij`) and normalises `v[0] = 0`. Works in normalised units.
fn full_potentials(
    su: &[f64],
    sv: &[f64],
    rows: &[usize],
    cols: &[usize],
    dist: &Array2<f64>,
    scale: f64,
    p: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = dist.dim();
    let c = |i: usize, j: usize| (dist[[i, j]] / scale).powf(p);
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    for (a, &i) in rows.iter().enumerate() {
        u[i] = su[a];
    }
    for (b, &j) in cols.iter().enumerate() {
        v[j] = sv[b];
    }
    for i in 0..m {
        if u[i].is_nan() {
            u[i] = cols.iter().map(|&j| c(i, j) - v[j]).fold(f64::INFINITY, f64::min);
        }
    }
    for j in 0..n {
        if v[j].is_nan() {
            v[j] = (0..m).map(|i| c(i, j) - u[i]).fold(f64::INFINITY, f64::min);
        }
    }
    let shift = v[0];
    v.iter_mut().for_each(|x| *x -= shift);
    u.iter_mut().for_each(|x| *x += shift);
    (u, v)
}

fn check_space(space: &FiniteMetricSpace, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    ensure_len(space.len(), mu.len())?;
    ensure_len(space.len(), nu.len())
}

/// `W_p(μ, ν)` for `p ∈ [1, ∞]` with an optimal plan.
pub fn wasserstein(
    space: &FiniteMetricSpace,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: Exponent,
) -> Result<WassersteinSolution> {
    check_space(space, mu, nu)?;
    let raw = optimal_transport(mu.weights(), nu.weights(), space.dist(), p)?;
    let potentials = match (p, raw.potentials) {
        (Exponent::Finite(p), Some((_, v))) => {
            let f = ScalarField::new(v.iter().map(|x| -x).collect())?;
            let f_star = c_transform(&f, space, p)?;
            Some(DualPotentials { f, f_star, p })
        }
        _ => None,
    };
    Ok(WassersteinSolution {
        value: raw.value,
        plan: Coupling::from_matrix(raw.plan),
        potentials,
    })
}

/// `W_p` for finite `p >= 1`.
pub fn wasserstein_p(
    space: &FiniteMetricSpace,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
) -> Result<WassersteinSolution> {
    wasserstein(space, mu, nu, Exponent::finite(p)?)
}

/// Bottleneck distance `W_∞`.
pub fn wasserstein_inf(
    space: &FiniteMetricSpace,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<WassersteinSolution> {
    wasserstein(space, mu, nu, Exponent::Infinite)
}

/// `f*(y) = min_x { f(x) + d(x, y)^p }`.
pub fn c_transform(f: &ScalarField, space: &FiniteMetricSpace, p: f64) -> Result<ScalarField> {
    ensure_len(space.len(), f.len())?;
    let n = space.len();
    let vals = (0..n)
        .map(|y| {
            (0..n)
                .map(|x| f.values()[x] + space.d(x, y).powf(p))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    ScalarField::new(vals)
}

/// `W_p(μ, ν)^p − (∫ f* dμ − ∫ f dν)`; nonnegative by weak duality.
pub fn kantorovich_gap(
    space: &FiniteMetricSpace,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    f: &ScalarField,
) -> Result<f64> {
    let w = wasserstein_p(space, mu, nu, p)?;
    let f_star = c_transform(f, space, p)?;
    Ok(w.value.powf(p) - (mu.integrate(&f_star) - nu.integrate(f)))
}

/// Lipschitz slack accepted by [`rubinstein_value`].
pub const RUBINSTEIN_LIP_TOL: f64 = 1e-12;

/// `∫ f dμ − ∫ f dν` for a 1-Lipschitz `f`.
pub fn rubinstein_value(
    space: &FiniteMetricSpace,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    f: &ScalarField,
) -> Result<f64> {
    check_space(space, mu, nu)?;
    let lip = lipschitz_constant(f, space)?;
    if lip > 1.0 + RUBINSTEIN_LIP_TOL {
        return Err(Error::LipschitzExceeded { measured: lip });
    }
    Ok(mu.integrate(f) - nu.integrate(f))
}

/// `π̃ = Σ_{x,y} π(x, y) P_{x,y}`, a coupling of `P*μ` and `P*ν`.
pub fn glue_couplings(pi: &Coupling, family: &BTreeMap<(usize, usize), Coupling>) -> Result<Coupling> {
    let n = pi.matrix().nrows();
    let mut glued = Array2::zeros((n, n));
    for (x, y, mass) in pi.triples() {
        let plan = family.get(&(x, y)).ok_or(Error::MissingCoupling(x, y))?;
        ensure_len(n, plan.matrix().nrows())?;
        glued.scaled_add(mass, plan.matrix());
    }
    Ok(Coupling::from_matrix(glued))
}

/// `W_p` along an increasing list of exponents.
pub fn wp_limit_sequence(
    space: &FiniteMetricSpace,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p_list: &[f64],
) -> Result<Vec<f64>> {
    if p_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Malformed(
            "exponent list must be strictly increasing".into(),
        ));
    }
    p_list
        .iter()
        .map(|&p| wasserstein_p(space, mu, nu, p).map(|w| w.value))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_points() -> FiniteMetricSpace {
        FiniteMetricSpace::from_matrix(array![[0.0, 1.0], [1.0, 0.0]]).unwrap()
    }

    fn line3() -> FiniteMetricSpace {
        FiniteMetricSpace::unit_interval(3).unwrap().scaled(2.0).unwrap()
    }

    /// One-parameter polytope of 2x2 couplings: π = [[s, a-s], [b-s, 1-a-b+s]].
    fn brute_force_two_point(a: f64, b: f64, p: f64) -> f64 {
        let lo = (a + b - 1.0).max(0.0);
        let hi = a.min(b);
        let steps = 100_000;
        (0..=steps)
            .map(|k| {
                let s = lo + (hi - lo) * k as f64 / steps as f64;
                (a - s) + (b - s)
            })
            .fold(f64::INFINITY, f64::min)
            .powf(1.0 / p)
    }

    #[test]
    fn dirac_to_itself() {
        let s = two_points();
        let mu = DiscreteMeasure::dirac(2, 0);
        let w = wasserstein_p(&s, &mu, &mu, 1.0).unwrap();
        assert_eq!(w.value, 0.0);
        assert_eq!(w.plan.get(0, 0), 1.0);
    }

    #[test]
    fn two_point_instance_p1_p2() {
        let s = two_points();
        let mu = DiscreteMeasure::new(vec![0.5, 0.5]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.75, 0.25]).unwrap();
        let expect1 = brute_force_two_point(0.5, 0.75, 1.0);
        let expect2 = brute_force_two_point(0.5, 0.75, 2.0);
        assert!((expect1 - 0.25).abs() < 1e-12);
        assert!((expect2 - 0.5).abs() < 1e-12);
        let w1 = wasserstein_p(&s, &mu, &nu, 1.0).unwrap();
        let w2 = wasserstein_p(&s, &mu, &nu, 2.0).unwrap();
        assert!((w1.value - expect1).abs() < 1e-12);
        assert!((w2.value - expect2).abs() < 1e-12);
        Coupling::new(w1.plan.matrix().clone(), &mu, &nu).unwrap();
    }

    #[test]
    fn bottleneck_examples() {
        let s = two_points();
        let mu = DiscreteMeasure::new(vec![0.5, 0.5]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.75, 0.25]).unwrap();
        assert_eq!(wasserstein_inf(&s, &mu, &mu).unwrap().value, 0.0);
        assert_eq!(wasserstein_inf(&s, &mu, &nu).unwrap().value, 1.0);

        let l = line3();
        let mu = DiscreteMeasure::dirac(3, 0);
        let nu = DiscreteMeasure::new(vec![0.0, 0.5, 0.5]).unwrap();
        let w = wasserstein_inf(&l, &mu, &nu).unwrap();
        assert_eq!(w.value, 2.0);
        Coupling::new(w.plan.matrix().clone(), &mu, &nu).unwrap();
    }

    #[test]
    fn mismatched_space_and_bad_exponent() {
        let s = two_points();
        let mu = DiscreteMeasure::dirac(3, 0);
        let nu = DiscreteMeasure::dirac(2, 0);
        assert!(wasserstein_p(&s, &mu, &nu, 1.0).is_err());
        let mu = DiscreteMeasure::dirac(2, 0);
        assert!(wasserstein_p(&s, &mu, &nu, 0.5).is_err());
    }

    #[test]
    fn measure_validation() {
        assert!(DiscreteMeasure::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::new(vec![-0.5, 1.5]).is_err());
        assert!(DiscreteMeasure::new(vec![]).is_err());
        assert_eq!(
            DiscreteMeasure::from_masses(&[1.0, 3.0]).unwrap().weights(),
            &[0.25, 0.75]
        );
    }

    #[test]
    fn c_transform_examples() {
        let s = two_points();
        let zero = ScalarField::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(c_transform(&zero, &s, 1.0).unwrap(), zero);
        let f = ScalarField::new(vec![0.0, 3.0]).unwrap();
        assert_eq!(c_transform(&f, &s, 1.0).unwrap().values(), &[0.0, 1.0]);
        let shifted = ScalarField::new(vec![2.5, 5.5]).unwrap();
        assert_eq!(c_transform(&shifted, &s, 1.0).unwrap().values(), &[2.5, 3.5]);
    }

    #[test]
    fn kantorovich_gap_examples() {
        let s = line3();
        let mu = DiscreteMeasure::new(vec![0.2, 0.3, 0.5]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.6, 0.1, 0.3]).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let w = wasserstein_p(&s, &mu, &nu, p).unwrap();
            let pot = w.potentials.unwrap();
            assert_eq!(pot.f.values()[0], 0.0);
            let gap = kantorovich_gap(&s, &mu, &nu, p, &pot.f).unwrap();
            assert!(gap.abs() <= 1e-8, "p={p} gap={gap}");
            let arbitrary = ScalarField::new(vec![0.3, -1.0, 2.0]).unwrap();
            assert!(kantorovich_gap(&s, &mu, &nu, p, &arbitrary).unwrap() >= -1e-9);
        }
        let zero = ScalarField::new(vec![0.0; 3]).unwrap();
        assert_eq!(kantorovich_gap(&s, &mu, &mu, 1.0, &zero).unwrap(), 0.0);
    }

    #[test]
    fn rubinstein_examples() {
        let s = two_points();
        let a = DiscreteMeasure::dirac(2, 0);
        let b = DiscreteMeasure::dirac(2, 1);
        let f = ScalarField::new(vec![0.0, -1.0]).unwrap();
        assert_eq!(rubinstein_value(&s, &a, &b, &f).unwrap(), 1.0);
        assert_eq!(rubinstein_value(&s, &a, &a, &f).unwrap(), 0.0);
        let steep = ScalarField::new(vec![0.0, 2.0]).unwrap();
        match rubinstein_value(&s, &a, &b, &steep) {
            Err(Error::LipschitzExceeded { measured }) => assert_eq!(measured, 2.0),
            other => panic!("unexpected {other:?}"),
        }

        let l = line3();
        let mu = DiscreteMeasure::dirac(3, 0);
        let nu = DiscreteMeasure::new(vec![0.1, 0.4, 0.5]).unwrap();
        let cone = ScalarField::new((0..3).map(|y| l.d(0, y)).collect()).unwrap();
        let value = rubinstein_value(&l, &mu, &nu, &cone).unwrap();
        let expected: f64 = -(0..3).map(|y| l.d(0, y) * nu.weights()[y]).sum::<f64>();
        assert!((value - expected).abs() < 1e-15);
        assert!(value.abs() <= wasserstein_p(&l, &mu, &nu, 1.0).unwrap().value + 1e-12);
    }

    #[test]
    fn glue_dirac_and_diagonal() {
        let n = 3;
        let pi = Coupling::dirac(n, 0, 2);
        let mut fam = BTreeMap::new();
        let mut m = Array2::zeros((n, n));
        m[[0, 1]] = 0.5;
        m[[2, 2]] = 0.5;
        fam.insert((0, 2), Coupling::from_matrix(m.clone()));
        assert_eq!(glue_couplings(&pi, &fam).unwrap().matrix(), &m);

        fam.clear();
        assert!(matches!(
            glue_couplings(&pi, &fam),
            Err(Error::MissingCoupling(0, 2))
        ));
    }

    #[test]
    fn glue_two_by_two_matches_direct_sum() {
        let pi = Coupling::from_matrix(array![[0.25, 0.25], [0.0, 0.5]]);
        let mut fam = BTreeMap::new();
        fam.insert((0, 0), Coupling::from_matrix(array![[1.0, 0.0], [0.0, 0.0]]));
        fam.insert((0, 1), Coupling::from_matrix(array![[0.5, 0.5], [0.0, 0.0]]));
        fam.insert((1, 1), Coupling::from_matrix(array![[0.0, 0.0], [0.2, 0.8]]));
        let g = glue_couplings(&pi, &fam).unwrap();
        // 0.25*[1,0;0,0] + 0.25*[.5,.5;0,0] + 0.5*[0,0;.2,.8]
        assert_eq!(g.matrix(), &array![[0.375, 0.125], [0.1, 0.4]]);
        let d = array![[0.0, 1.0], [1.0, 0.0]];
        let direct = 0.25 * 0.0 + 0.25 * 0.5 + 0.5 * 0.2;
        assert!((g.lp_cost(&d, 2.0) - direct).abs() < 1e-15);
    }

    #[test]
    fn limit_sequence_two_point() {
        let s = two_points();
        let mu = DiscreteMeasure::new(vec![0.5, 0.5]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.75, 0.25]).unwrap();
        let ps = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
        let seq = wp_limit_sequence(&s, &mu, &nu, &ps).unwrap();
        for (w, p) in seq.iter().zip(ps) {
            assert!((w - 0.25f64.powf(1.0 / p)).abs() < 1e-12, "p={p}");
        }
        assert!(seq.windows(2).all(|w| w[0] <= w[1]));
        assert!(seq.last().unwrap() <= &1.0);
        let same = wp_limit_sequence(&s, &mu, &mu, &ps).unwrap();
        assert!(same.iter().all(|&w| w == 0.0));
        assert!(wp_limit_sequence(&s, &mu, &nu, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn zero_mass_points_are_reinserted() {
        let l = FiniteMetricSpace::unit_interval(5).unwrap();
        let mu = DiscreteMeasure::new(vec![0.5, 0.0, 0.5, 0.0, 0.0]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.0, 0.0, 0.0, 0.5, 0.5]).unwrap();
        let w = wasserstein_p(&l, &mu, &nu, 1.0).unwrap();
        assert_eq!(w.plan.matrix().dim(), (5, 5));
        Coupling::new(w.plan.matrix().clone(), &mu, &nu).unwrap();
        assert!((w.value - 0.5 * (0.75 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn very_large_p_switches_to_bottleneck() {
        let s = two_points();
        let mu = DiscreteMeasure::new(vec![0.5, 0.5]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.75, 0.25]).unwrap();
        let w = wasserstein_p(&s, &mu, &nu, 1000.0).unwrap();
        assert_eq!(w.value, 1.0);
        assert!(w.potentials.is_none());
    }
}
