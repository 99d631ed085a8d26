//! Monte Carlo sampling of the hypoelliptic diffusion
//! `x_t = x + W_t`, `z_ij(t) = z_ij + ½ ∫ x_i dW_j − x_j dW_i` (Itô).
//!
//! Sample `s` draws from the ChaCha8 stream `s` of the run seed and consumes a
//! fixed number of words per step, so every Gaussian increment is a function
//! of `(seed, sample, step)` alone and samples can be generated in any order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{area_dim, gauge_flat, mul_flat, Step2Point};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SdeConfig {
    pub t: f64,
    pub steps: usize,
    pub samples: usize,
    pub seed: u64,
    pub start: Step2Point,
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::InvalidParameter {
                name: "t",
                value: self.t,
                reason: "time horizon must be positive",
            });
        }
        if self.steps == 0 || self.samples == 0 {
            return Err(Error::InvalidParameter {
                name: if self.steps == 0 { "steps" } else { "samples" },
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Step2Point::new(self.start.x.clone(), self.start.z.clone()).map(|_| ())
    }
}

/// Uniform in `(0, 1]` from the top 53 bits.
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fills `out` with standard normals, two per Box-Muller pair
/// (always `2 · ceil(len / 2)` words consumed).
fn normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for pair in out.chunks_mut(2) {
        let u1 = open_unit(rng.next_u64());
        let u2 = open_unit(rng.next_u64());
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        pair[0] = r * c;
        if let Some(second) = pair.get_mut(1) {
            *second = r * s;
        }
    }
}

fn stream(seed: u64, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample as u64);
    rng
}

/// One Itô step: the left-point area update equals left multiplication by
/// the horizontal increment.
fn step(n: usize, state: &mut [f64], dw: &[f64]) {
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            state[k] += 0.5 * (state[i] * dw[j] - state[j] * dw[i]);
            k += 1;
        }
    }
    for i in 0..n {
        state[i] += dw[i];
    }
}

/// Point cloud in flat storage `x_1..x_n, z_12..` per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Cloud {
    n: usize,
    data: Vec<f64>,
}

impl Cloud {
    pub fn from_points(points: &[Step2Point]) -> Result<Self> {
        let n = points.first().ok_or(Error::Empty("cloud has no points"))?.n();
        let mut data = Vec::with_capacity(points.len() * (n + area_dim(n)));
        for p in points {
            if p.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: p.n(),
                });
            }
            data.extend(p.flat());
        }
        Ok(Self { n, data })
    }

    pub fn from_flat(n: usize, data: Vec<f64>) -> Result<Self> {
        let dim = n + area_dim(n);
        if n < 2 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::Malformed(
                "cloud data does not match the group dimension".into(),
            ));
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Coordinates per point.
    pub fn dim(&self) -> usize {
        self.n + area_dim(self.n)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn point(&self, i: usize) -> Step2Point {
        let c = self.coords(i);
        Step2Point {
            x: c[..self.n].to_vec(),
            z: c[self.n..].to_vec(),
        }
    }

    /// Per-coordinate sample means.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for row in self.data.chunks(d) {
            for (a, v) in m.iter_mut().zip(row) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.len() as f64);
        m
    }

    /// Per-coordinate unbiased sample variances.
    pub fn variance(&self) -> Vec<f64> {
        let d = self.dim();
        let mean = self.mean();
        let mut v = vec![0.0; d];
        for row in self.data.chunks(d) {
            for ((a, x), m) in v.iter_mut().zip(row).zip(&mean) {
                *a += (x - m).powi(2);
            }
        }
        let denom = (self.len().max(2) - 1) as f64;
        v.iter_mut().for_each(|x| *x /= denom);
        v
    }

    /// Batch-means standard error of each coordinate mean.
    pub fn batch_standard_error(&self, batches: usize) -> Vec<f64> {
        let d = self.dim();
        let size = self.len() / batches.max(1);
        if size == 0 || batches < 2 {
            return vec![f64::INFINITY; d];
        }
        let means: Vec<Vec<f64>> = (0..batches)
            .map(|b| {
                let mut m = vec![0.0; d];
                for row in self.data[b * size * d..(b + 1) * size * d].chunks(d) {
                    for (a, v) in m.iter_mut().zip(row) {
                        *a += v / size as f64;
                    }
                }
                m
            })
            .collect();
        (0..d)
            .map(|c| {
                let mu = means.iter().map(|m| m[c]).sum::<f64>() / batches as f64;
                let var = means.iter().map(|m| (m[c] - mu).powi(2)).sum::<f64>() / (batches - 1) as f64;
                (var / batches as f64).sqrt()
            })
            .collect()
    }

    /// Points at indices `offset, offset + stride, ...` with the stride chosen
    /// so at most `max_points` remain.
    pub fn thin(&self, max_points: usize, offset: usize) -> Cloud {
        let len = self.len();
        let max_points = max_points.max(1);
        let stride = len.div_ceil(max_points).max(1);
        let offset = offset % stride;
        let idx: Vec<usize> = (offset..len).step_by(stride).take(max_points).collect();
        self.select(&idx)
    }

    pub fn select(&self, indices: &[usize]) -> Cloud {
        let mut data = Vec::with_capacity(indices.len() * self.dim());
        for &i in indices {
            data.extend_from_slice(self.coords(i));
        }
        Cloud { n: self.n, data }
    }

    /// `δ_λ` applied to every point.
    pub fn dilate(&self, lambda: f64) -> Cloud {
        let d = self.dim();
        let mut data = self.data.clone();
        for row in data.chunks_mut(d) {
            for (c, v) in row.iter_mut().enumerate() {
                *v *= if c < self.n { lambda } else { lambda * lambda };
            }
        }
        Cloud { n: self.n, data }
    }

    /// Korányi gauge between point `i` of `self` and point `j` of `other`.
    pub fn gauge_to(&self, i: usize, other: &Cloud, j: usize) -> f64 {
        gauge_flat(self.n, self.coords(i), other.coords(j))
    }
}

/// `samples` endpoints of the diffusion started at `cfg.start`.
pub fn sample_diffusion(cfg: &SdeConfig) -> Result<Cloud> {
    cfg.validate()?;
    let n = cfg.start.n();
    let dim = n + area_dim(n);
    let sd = (cfg.t / cfg.steps as f64).sqrt();
    let start = cfg.start.flat();
    let mut data = vec![0.0; cfg.samples * dim];
    data.par_chunks_mut(dim).enumerate().for_each(|(s, out)| {
        let mut rng = stream(cfg.seed, s);
        let mut dw = vec![0.0; n];
        out.copy_from_slice(&start);
        for _ in 0..cfg.steps {
            normals(&mut rng, &mut dw);
            dw.iter_mut().for_each(|v| *v *= sd);
            step(n, out, &dw);
        }
    });
    Ok(Cloud { n, data })
}

/// RMS over samples of the difference between the Itô area at `steps` and at
/// `2·steps` computed on the same Brownian path.
pub fn area_refinement_rms(cfg: &SdeConfig) -> Result<f64> {
    cfg.validate()?;
    let n = cfg.start.n();
    let sd = (cfg.t / (2 * cfg.steps) as f64).sqrt();
    let start = cfg.start.flat();
    let total: f64 = (0..cfg.samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(cfg.seed, s);
            let mut fine = start.clone();
            let mut coarse = start.clone();
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            for _ in 0..cfg.steps {
                normals(&mut rng, &mut a);
                normals(&mut rng, &mut b);
                a.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= sd);
                step(n, &mut fine, &a);
                step(n, &mut fine, &b);
                let joint: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
                step(n, &mut coarse, &joint);
            }
            fine[n..]
                .iter()
                .zip(&coarse[n..])
                .map(|(u, v)| (u - v).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok((total / cfg.samples as f64).sqrt())
}

/// `g · p` for every point of the cloud.
pub fn left_translate_cloud(cloud: &Cloud, g: &Step2Point) -> Result<Cloud> {
    if g.n() != cloud.n {
        return Err(Error::DimensionMismatch {
            expected: cloud.n,
            found: g.n(),
        });
    }
    let d = cloud.dim();
    let gf = g.flat();
    let mut data = vec![0.0; cloud.data.len()];
    data.par_chunks_mut(d)
        .zip(cloud.data.par_chunks(d))
        .for_each(|(out, p)| mul_flat(cloud.n, &gf, p, out));
    Ok(Cloud { n: cloud.n, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heisenberg::group_mul;

    fn cfg(samples: usize, steps: usize) -> SdeConfig {
        SdeConfig {
            t: 1.0,
            steps,
            samples,
            seed: 7,
            start: Step2Point::heisenberg(0.5, -1.0, 0.25),
        }
    }

    #[test]
    fn validation() {
        let mut c = cfg(10, 10);
        c.t = 0.0;
        assert!(sample_diffusion(&c).is_err());
        let mut c = cfg(10, 0);
        assert!(sample_diffusion(&c).is_err());
        c.steps = 3;
        c.start = Step2Point {
            x: vec![0.0, 0.0],
            z: vec![],
        };
        assert!(sample_diffusion(&c).is_err());
    }

    #[test]
    fn reproducible_and_order_independent() {
        let a = sample_diffusion(&cfg(64, 50)).unwrap();
        let b = sample_diffusion(&cfg(64, 50)).unwrap();
        assert_eq!(a, b);
        let c = sample_diffusion(&cfg(16, 50)).unwrap();
        for i in 0..16 {
            assert_eq!(a.coords(i), c.coords(i));
        }
    }

    #[test]
    fn moments_small_run() {
        let c = cfg(20_000, 20);
        let cloud = sample_diffusion(&c).unwrap();
        let mean = cloud.mean();
        let var = cloud.variance();
        let se = cloud.batch_standard_error(20);
        let tol = 4.0 * (c.t / c.samples as f64).sqrt();
        assert!((mean[0] - 0.5).abs() < tol && (mean[1] + 1.0).abs() < tol);
        assert!((var[0] - 1.0).abs() < 0.05 && (var[1] - 1.0).abs() < 0.05);
        assert!((mean[2] - 0.25).abs() < 4.0 * se[2]);
    }

    #[test]
    fn translate_examples() {
        let cloud = Cloud::from_points(&[Step2Point::heisenberg(0.0, 1.0, 0.0)]).unwrap();
        let g = Step2Point::heisenberg(1.0, 0.0, 0.0);
        let moved = left_translate_cloud(&cloud, &g).unwrap();
        assert_eq!(moved.point(0), Step2Point::heisenberg(1.0, 1.0, 0.5));
        let same = left_translate_cloud(&cloud, &Step2Point::identity(2)).unwrap();
        assert_eq!(same, cloud);

        let base = sample_diffusion(&cfg(40, 10)).unwrap();
        let g = Step2Point::heisenberg(-0.7, 2.0, 0.3);
        let moved = left_translate_cloud(&base, &g).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let d0 = base.gauge_to(i, &base, j);
                let d1 = moved.gauge_to(i, &moved, j);
                assert!((d0 - d1).abs() <= 1e-12 * (1.0 + d0));
            }
            assert_eq!(moved.point(i), group_mul(&g, &base.point(i)).unwrap());
        }
    }

    #[test]
    fn translated_start_matches_translated_cloud() {
        let g = Step2Point::heisenberg(0.3, 0.1, -0.2);
        let mut c0 = cfg(50, 30);
        c0.start = Step2Point::identity(2);
        let base = sample_diffusion(&c0).unwrap();
        let mut cg = c0.clone();
        cg.start = g.clone();
        let direct = sample_diffusion(&cg).unwrap();
        let moved = left_translate_cloud(&base, &g).unwrap();
        for (a, b) in direct.data.iter().zip(&moved.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn thinning() {
        let cloud = sample_diffusion(&cfg(1000, 2)).unwrap();
        let t = cloud.thin(300, 1);
        assert!(t.len() <= 300 && t.len() >= 250);
        assert_eq!(t.coords(0), cloud.coords(1));
        assert_eq!(cloud.thin(5000, 0), cloud);
    }

    #[test]
    fn area_refinement_order() {
        let rms: Vec<f64> = [32usize, 64, 128]
            .iter()
            .map(|&steps| area_refinement_rms(&cfg(2000, steps)).unwrap())
            .collect();
        for w in rms.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 0.4, "{rms:?}");
        }
    }

    #[test]
    fn general_step_two_group() {
        let c = SdeConfig {
            t: 0.5,
            steps: 10,
            samples: 200,
            seed: 3,
            start: Step2Point::identity(3),
        };
        let cloud = sample_diffusion(&c).unwrap();
        assert_eq!(cloud.dim(), 6);
        assert_eq!(cloud.len(), 200);
    }
}
