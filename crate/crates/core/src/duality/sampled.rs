//! Monte Carlo estimates of `W_p(P_x, P_y) / gauge(x, y)` for the
//! hypoelliptic diffusion on the Heisenberg group.
//!
//! Both clouds are left translates of one cloud started at the identity, so
//! `P_x` and `P_y` are sampled with common random numbers. Start pairs are
//! dilated by `√t`, which keeps the ratio scale-free across times.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::heisenberg::{
    koranyi_gauge, left_translate_cloud, sample_diffusion, Cloud, SdeConfig, Step2Point,
};
use crate::transport::optimal_transport;
use crate::{Error, Exponent, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SampledExperiment {
    pub times: Vec<f64>,
    pub steps: usize,
    pub samples: usize,
    pub seed: u64,
    /// Support size after stratified thinning (at most 500).
    pub thin_to: usize,
    pub resamples: usize,
    /// Two-sided confidence level of the percentile intervals.
    pub level: f64,
    /// Number of extra thinnings used to measure thinning spread.
    pub thinnings: usize,
    /// Start pairs at unit scale.
    pub pairs: Vec<(Step2Point, Step2Point)>,
    pub p_list: Vec<Exponent>,
}

impl SampledExperiment {
    pub fn new(times: Vec<f64>, pairs: Vec<(Step2Point, Step2Point)>, seed: u64) -> Self {
        Self {
            times,
            steps: 400,
            samples: 20_000,
            seed,
            thin_to: 200,
            resamples: 200,
            level: 0.95,
            thinnings: 3,
            pairs,
            p_list: vec![Exponent::Finite(1.0), Exponent::Finite(2.0)],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::Empty("time list"));
        }
        if self.pairs.is_empty() {
            return Err(Error::Empty("start pairs"));
        }
        if self.p_list.is_empty() {
            return Err(Error::Empty("exponent list"));
        }
        if self.thin_to < 2 || self.thin_to > 500 {
            return Err(Error::InvalidParameter {
                name: "thin_to",
                value: self.thin_to as f64,
                reason: "support size must lie in [2, 500]",
            });
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidParameter {
                name: "level",
                value: self.level,
                reason: "confidence level must lie in (0, 1)",
            });
        }
        let n = self.pairs[0].0.n();
        for (x, y) in &self.pairs {
            if x.n() != n || y.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: x.n().max(y.n()),
                });
            }
            if koranyi_gauge(x, y)? == 0.0 {
                return Err(Error::Malformed("start pair consists of equal points".into()));
            }
        }
        Ok(())
    }
}

/// `count` pairs `(x, x·h)` with `x` in `[−1, 1]^3` and `gauge(h) = 1`.
pub fn default_start_pairs(count: usize, seed: u64) -> Vec<(Step2Point, Step2Point)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x = Step2Point::heisenberg(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let r: f64 = rng.random_range(0.2..1.0);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let h = Step2Point::heisenberg(r * theta.cos(), r * theta.sin(), sign * (1.0 - r.powi(4)).sqrt());
            let y = crate::heisenberg::group_mul(&x, &h).expect("same dimension");
            (x, y)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledConstant {
    pub t: f64,
    pub p: Exponent,
    /// `max_k W_p(cloud_{x_k}, cloud_{y_k}) / gauge(x_k, y_k)`.
    pub estimate: f64,
    pub per_pair: Vec<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Range of the estimate over shifted thinnings.
    pub thinning_spread: f64,
}

impl SampledConstant {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

struct PairGeometry {
    gauge: f64,
    dist: Array2<f64>,
}

fn pair_geometry(base: &Cloud, x: &Step2Point, y: &Step2Point) -> Result<PairGeometry> {
    let cx = left_translate_cloud(base, x)?;
    let cy = left_translate_cloud(base, y)?;
    let m = base.len();
    Ok(PairGeometry {
        gauge: koranyi_gauge(x, y)?,
        dist: Array2::from_shape_fn((m, m), |(i, j)| cx.gauge_to(i, &cy, j)),
    })
}

fn ratios(geoms: &[PairGeometry], weights: &[f64], p: Exponent) -> Result<Vec<f64>> {
    geoms
        .par_iter()
        .map(|g| Ok(optimal_transport(weights, weights, &g.dist, p)?.value / g.gauge))
        .collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Estimates with bootstrap intervals, ordered by time then exponent.
pub fn sampled_constants(exp: &SampledExperiment) -> Result<Vec<SampledConstant>> {
    exp.validate()?;
    let n = exp.pairs[0].0.n();
    let mut out = Vec::new();
    for (ti, &t) in exp.times.iter().enumerate() {
        let cfg = SdeConfig {
            t,
            steps: exp.steps,
            samples: exp.samples,
            seed: exp
                .seed
                .wrapping_add((ti as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            start: Step2Point::identity(n),
        };
        let origin = sample_diffusion(&cfg)?;
        let scale = t.sqrt();
        let scaled: Vec<(Step2Point, Step2Point)> = exp
            .pairs
            .iter()
            .map(|(x, y)| (x.dilate(scale), y.dilate(scale)))
            .collect();
        let geometry = |cloud: &Cloud| {
            scaled
                .iter()
                .map(|(x, y)| pair_geometry(cloud, x, y))
                .collect::<Result<Vec<_>>>()
        };
        let base = origin.thin(exp.thin_to, 0);
        let geoms = geometry(&base)?;
        let m = base.len();
        let uniform = vec![1.0 / m as f64; m];

        let mut shifted = Vec::with_capacity(exp.thinnings);
        for k in 1..=exp.thinnings {
            let stride = origin.len().div_ceil(exp.thin_to).max(1);
            if k >= stride {
                break;
            }
            let g = geometry(&origin.thin(exp.thin_to, k))?;
            let w = vec![1.0 / g[0].dist.nrows() as f64; g[0].dist.nrows()];
            shifted.push((g, w));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xB007_57A9);
        let resample_weights: Vec<Vec<f64>> = (0..exp.resamples)
            .map(|_| {
                let mut w = vec![0.0; m];
                for _ in 0..m {
                    w[rng.random_range(0..m)] += 1.0 / m as f64;
                }
                w
            })
            .collect();

        for &p in &exp.p_list {
            let per_pair = ratios(&geoms, &uniform, p)?;
            let estimate = max_of(&per_pair);
            let mut boot = resample_weights
                .iter()
                .map(|w| ratios(&geoms, w, p).map(|r| max_of(&r)))
                .collect::<Result<Vec<f64>>>()?;
            boot.sort_by(f64::total_cmp);
            let alpha = 0.5 * (1.0 - exp.level);
            let (mut lo, mut hi) = (estimate, estimate);
            for (g, w) in &shifted {
                let e = max_of(&ratios(g, w, p)?);
                lo = lo.min(e);
                hi = hi.max(e);
            }
            out.push(SampledConstant {
                t,
                p,
                estimate,
                per_pair,
                ci_low: if boot.is_empty() {
                    estimate
                } else {
                    percentile(&boot, alpha)
                },
                ci_high: if boot.is_empty() {
                    estimate
                } else {
                    percentile(&boot, 1.0 - alpha)
                },
                thinning_spread: hi - lo,
            });
        }
    }
    Ok(out)
}
