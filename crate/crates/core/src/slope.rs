//! Scalar fields, local slopes and Lipschitz constants on finite spaces.
//!
//! The slope of `f` at `z` and scale `r` is
//! `G_r(z) = max { |f(z) − f(w)| / d(z, w) : 0 < d(z, w) <= r }`,
//! and `0` when that punctured ball is empty. [`local_slope`] uses, at each
//! point, the radius of its nearest-neighbour shell.

use rayon::prelude::*;

use crate::error::ensure_len;
use crate::metric::{DiscretePath, FiniteMetricSpace};
use crate::{Error, Result};

/// Relative slack used when testing `d(z, w) <= r`.
pub const RADIUS_SLACK: f64 = 1e-12;

/// Finite function values indexed by point.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Malformed(format!("field value {i} is {v}")));
        }
        Ok(Self { values })
    }

    /// `f(y) = g(y)` for every point.
    pub fn from_fn(n: usize, g: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new((0..n).map(g).collect())
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    /// `d(x0, ·)`.
    pub fn distance_cone(space: &FiniteMetricSpace, x0: usize) -> Self {
        Self {
            values: (0..space.len()).map(|y| space.d(x0, y)).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        ensure_len(self.len(), other.len())?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `‖f − g‖_∞`.
    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        ensure_len(self.len(), other.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Radius at which a [`SlopeField`] was measured.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlopeScale {
    Radius(f64),
    /// Per-point nearest-neighbour shell.
    NearestShell,
}

/// Nonnegative slope values with the scale they were measured at.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeField {
    pub values: Vec<f64>,
    pub scale: SlopeScale,
}

impl SlopeField {
    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Uses a field of nonnegative values directly as an upper-gradient candidate.
    pub fn from_values(values: Vec<f64>, scale: SlopeScale) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Malformed(
                "slope values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { values, scale })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn slope_within(f: &[f64], space: &FiniteMetricSpace, z: usize, r: f64) -> f64 {
    let limit = r * (1.0 + RADIUS_SLACK);
    let mut best: f64 = 0.0;
    for w in 0..space.len() {
        let d = space.d(z, w);
        if d > 0.0 && d <= limit {
            best = best.max((f[z] - f[w]).abs() / d);
        }
    }
    best
}

/// `G_r` at every point.
pub fn slope_at_scale(f: &ScalarField, space: &FiniteMetricSpace, r: f64) -> Result<SlopeField> {
    ensure_len(space.len(), f.len())?;
    if !(r > 0.0) {
        return Err(Error::InvalidParameter {
            name: "r",
            value: r,
            reason: "slope radius must be positive",
        });
    }
    let values = (0..space.len())
        .into_par_iter()
        .map(|z| slope_within(f.values(), space, z, r))
        .collect();
    Ok(SlopeField {
        values,
        scale: SlopeScale::Radius(r),
    })
}

/// Slope over each point's nearest-neighbour shell `r_min(x)`.
pub fn local_slope(f: &ScalarField, space: &FiniteMetricSpace) -> Result<SlopeField> {
    ensure_len(space.len(), f.len())?;
    let values = (0..space.len())
        .into_par_iter()
        .map(|z| {
            let r = space.nearest_distance(z);
            if r.is_finite() && r > 0.0 {
                slope_within(f.values(), space, z, r)
            } else {
                0.0
            }
        })
        .collect();
    Ok(SlopeField {
        values,
        scale: SlopeScale::NearestShell,
    })
}

/// `max_{x≠y} |f(x) − f(y)| / d(x, y)` over pairs at positive distance.
pub fn lipschitz_constant(f: &ScalarField, space: &FiniteMetricSpace) -> Result<f64> {
    ensure_len(space.len(), f.len())?;
    let v = f.values();
    Ok((0..space.len())
        .into_par_iter()
        .map(|x| {
            let mut best: f64 = 0.0;
            for y in x + 1..space.len() {
                let d = space.d(x, y);
                if d > 0.0 {
                    best = best.max((v[x] - v[y]).abs() / d);
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max))
}

/// Trapezoid-rule `∫_γ g ds − |f(end) − f(start)|`.
pub fn upper_gradient_check(f: &ScalarField, g: &SlopeField, path: &DiscretePath) -> Result<f64> {
    ensure_len(f.len(), g.len())?;
    if let Some(&v) = path.vertices.iter().find(|&&v| v >= f.len()) {
        return Err(Error::DimensionMismatch {
            expected: f.len(),
            found: v + 1,
        });
    }
    let integral: f64 = path
        .vertices
        .windows(2)
        .zip(path.cumulative_length.windows(2))
        .map(|(v, c)| 0.5 * (g.values[v[0]] + g.values[v[1]]) * (c[1] - c[0]))
        .sum();
    let fv = f.values();
    Ok(integral - (fv[path.end()] - fv[path.start()]).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::WeightedGraph;
    use proptest::prelude::*;

    fn path3() -> FiniteMetricSpace {
        FiniteMetricSpace::shortest_path_space(WeightedGraph::path(3, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn scale_and_local_examples() {
        let s = path3();
        let f = ScalarField::new(vec![0.0, 2.0, 3.0]).unwrap();
        assert_eq!(slope_at_scale(&f, &s, 1.0).unwrap().values[1], 2.0);
        assert_eq!(local_slope(&f, &s).unwrap().values, vec![2.0, 2.0, 1.0]);
        assert_eq!(lipschitz_constant(&f, &s).unwrap(), 2.0);
        assert!(slope_at_scale(&f, &s, 0.0).is_err());
        assert!(slope_at_scale(&f, &s, -1.0).is_err());

        let c = ScalarField::constant(3, 4.0);
        assert!(local_slope(&c, &s).unwrap().values.iter().all(|&v| v == 0.0));
        assert!(slope_at_scale(&c, &s, 2.0)
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(lipschitz_constant(&c, &s).unwrap(), 0.0);
    }

    #[test]
    fn tiny_radius_gives_zero() {
        let s = path3();
        let f = ScalarField::new(vec![0.0, 2.0, 3.0]).unwrap();
        assert!(slope_at_scale(&f, &s, 0.5)
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn single_point_lipschitz_is_zero() {
        let s = FiniteMetricSpace::from_matrix(ndarray::array![[0.0]]).unwrap();
        let f = ScalarField::new(vec![5.0]).unwrap();
        assert_eq!(lipschitz_constant(&f, &s).unwrap(), 0.0);
        assert_eq!(local_slope(&f, &s).unwrap().values, vec![0.0]);
    }

    #[test]
    fn distance_cone_is_one_lipschitz() {
        let s = FiniteMetricSpace::unit_torus(9).unwrap();
        let f = ScalarField::distance_cone(&s, 2);
        assert!((lipschitz_constant(&f, &s).unwrap() - 1.0).abs() < 1e-12);
        assert!(local_slope(&f, &s).unwrap().sup() <= 1.0 + 1e-12);
    }

    #[test]
    fn upper_gradient_examples() {
        let s = FiniteMetricSpace::unit_interval(11).unwrap();
        let cone = ScalarField::distance_cone(&s, 0);
        let ones = SlopeField::from_values(vec![1.0; 11], SlopeScale::NearestShell).unwrap();
        let geo = s.minimal_geodesic(0, 10).unwrap();
        assert!(upper_gradient_check(&cone, &ones, &geo).unwrap().abs() < 1e-12);

        let c = ScalarField::constant(11, 1.0);
        let g =
            SlopeField::from_values((0..11).map(|i| i as f64).collect(), SlopeScale::NearestShell).unwrap();
        let margin = upper_gradient_check(&c, &g, &geo).unwrap();
        assert!((margin - 5.0).abs() < 1e-12);

        let single = DiscretePath::through(&s, vec![4]).unwrap();
        assert_eq!(upper_gradient_check(&cone, &ones, &single).unwrap(), 0.0);
    }

    #[test]
    fn mesh_consistency_order() {
        let errors: Vec<f64> = [50usize, 100, 200]
            .iter()
            .map(|&n| {
                let s = FiniteMetricSpace::unit_interval(n).unwrap();
                let x = |i: usize| i as f64 / (n - 1) as f64;
                let f = ScalarField::from_fn(n, |i| x(i).sin()).unwrap();
                let g = local_slope(&f, &s).unwrap();
                (0..n)
                    .map(|i| (g.values[i] - x(i).cos().abs()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 0.9, "observed order {order}");
        }
    }

    fn space_and_fields() -> impl Strategy<Value = (FiniteMetricSpace, Vec<f64>, Vec<f64>)> {
        (2usize..9).prop_flat_map(|n| {
            (
                prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), n),
                prop::collection::vec(-3.0f64..3.0, n),
                prop::collection::vec(-3.0f64..3.0, n),
            )
                .prop_filter_map("coincident points", |(pts, f, g)| {
                    let n = pts.len();
                    let d = ndarray::Array2::from_shape_fn((n, n), |(i, j)| {
                        ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt()
                    });
                    let space = FiniteMetricSpace::from_matrix(d).ok()?;
                    (space.min_positive_distance() > 1e-3).then_some((space, f, g))
                })
        })
    }

    proptest! {
        #[test]
        fn diameter_scale_gives_lipschitz((s, f, _) in space_and_fields()) {
            let f = ScalarField::new(f).unwrap();
            let g = slope_at_scale(&f, &s, s.diameter()).unwrap();
            prop_assert_eq!(g.sup(), lipschitz_constant(&f, &s).unwrap());
        }

        #[test]
        fn monotone_in_radius((s, f, _) in space_and_fields(), a in 0.01f64..5.0, b in 0.01f64..5.0) {
            let f = ScalarField::new(f).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let gl = slope_at_scale(&f, &s, lo).unwrap();
            let gh = slope_at_scale(&f, &s, hi).unwrap();
            for (x, y) in gl.values.iter().zip(&gh.values) {
                prop_assert!(x <= y);
            }
        }

        #[test]
        fn subadditive((s, f, g) in space_and_fields(), r in 0.01f64..5.0) {
            let f = ScalarField::new(f).unwrap();
            let g = ScalarField::new(g).unwrap();
            let sum = slope_at_scale(&f.add(&g).unwrap(), &s, r).unwrap();
            let sf = slope_at_scale(&f, &s, r).unwrap();
            let sg = slope_at_scale(&g, &s, r).unwrap();
            for i in 0..s.len() {
                prop_assert!(sum.values[i] <= sf.values[i] + sg.values[i] + 1e-12);
            }
        }

        #[test]
        fn homogeneous((s, f, _) in space_and_fields(), c in -4.0f64..4.0) {
            let f = ScalarField::new(f).unwrap();
            let a = local_slope(&f.scale(c), &s).unwrap();
            let b = local_slope(&f, &s).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - c.abs() * y).abs() <= 1e-12 * (1.0 + y));
            }
        }

        #[test]
        fn upper_gradient_on_interval(n in 5usize..40, k in 1usize..4) {
            let s = FiniteMetricSpace::unit_interval(n).unwrap();
            let f = ScalarField::from_fn(n, |i| (k as f64 * 3.0 * i as f64 / (n - 1) as f64).sin()).unwrap();
            let g = slope_at_scale(&f, &s, s.mesh()).unwrap();
            let geo = s.minimal_geodesic(0, n - 1).unwrap();
            let margin = upper_gradient_check(&f, &g, &geo).unwrap();
            let tol = 2.0 * lipschitz_constant(&f, &s).unwrap() * geo.max_step();
            prop_assert!(margin >= -tol);
        }
    }
}
