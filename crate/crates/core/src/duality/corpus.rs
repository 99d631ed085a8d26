//! Test functions for estimating `K_G`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{best_constant_gq, PairTransport};
use crate::hopf_lax::{hopf_lax, PowerLagrangian};
use crate::kernels::MarkovKernel;
use crate::metric::FiniteMetricSpace;
use crate::slope::ScalarField;
use crate::{Error, Exponent, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusOptions {
    /// Distance cones `d(·, x0)` centred at every `cone_stride`-th point.
    pub cone_stride: usize,
    /// Trigonometric modes `k = 1..=fourier_modes`; assumes the points are
    /// ordered around a cycle.
    pub fourier_modes: usize,
    /// Random McShane extensions `min_s (g(s) + d(·, s))`.
    pub mcshane: usize,
    /// Hopf-Lax smoothings of random fields.
    pub hopf_lax: usize,
    pub seed: u64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            cone_stride: 1,
            fourier_modes: 0,
            mcshane: 8,
            hopf_lax: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    fields: Vec<ScalarField>,
    labels: Vec<String>,
}

impl Corpus {
    pub fn push(&mut self, label: impl Into<String>, field: ScalarField) {
        self.labels.push(label.into());
        self.fields.push(field);
    }

    pub fn extend(&mut self, other: Corpus) {
        self.fields.extend(other.fields);
        self.labels.extend(other.labels);
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Target-side Kantorovich potentials of the given pair transports.
    pub fn add_potentials(&mut self, transports: &[PairTransport]) {
        for t in transports {
            if let Some(phi) = &t.potential {
                if phi.max() > phi.min() {
                    self.push(format!("potential:{}:{}", t.x, t.y), phi.clone());
                }
            }
        }
    }
}

pub fn build_corpus(space: &FiniteMetricSpace, opts: &CorpusOptions) -> Result<Corpus> {
    let n = space.len();
    if n < 2 {
        return Err(Error::Empty("corpus needs at least two points"));
    }
    let mut corpus = Corpus::default();
    if opts.cone_stride > 0 {
        for x in (0..n).step_by(opts.cone_stride) {
            corpus.push(format!("cone:{x}"), ScalarField::distance_cone(space, x));
        }
    }
    let tau = 2.0 * std::f64::consts::PI;
    for k in 1..=opts.fourier_modes {
        let w = tau * k as f64 / n as f64;
        corpus.push(
            format!("cos:{k}"),
            ScalarField::from_fn(n, |i| (w * i as f64).cos())?,
        );
        corpus.push(
            format!("sin:{k}"),
            ScalarField::from_fn(n, |i| (w * i as f64).sin())?,
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let diam = space.diameter();
    for k in 0..opts.mcshane {
        let size = rng.random_range(2..=n.min(8));
        let anchors: Vec<(usize, f64)> = (0..size)
            .map(|_| (rng.random_range(0..n), rng.random_range(0.0..0.5 * diam)))
            .collect();
        let f = ScalarField::from_fn(n, |x| {
            anchors
                .iter()
                .map(|&(s, g)| g + space.d(x, s))
                .fold(f64::INFINITY, f64::min)
        })?;
        corpus.push(format!("mcshane:{k}"), f);
    }

    let lagrangian = PowerLagrangian::new(2.0)?;
    for k in 0..opts.hopf_lax {
        let raw = ScalarField::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let t = rng.random_range(0.02..0.5) * diam * diam;
        corpus.push(format!("hopf-lax:{k}"), hopf_lax(&raw, t, &lagrangian, space)?);
    }
    Ok(corpus)
}

/// Relative increase of `K_G(q)` when `extra` is added to `base`.
pub fn corpus_adequacy(
    kernel: &MarkovKernel,
    space: &FiniteMetricSpace,
    q: Exponent,
    base: &Corpus,
    extra: &Corpus,
) -> Result<f64> {
    let k0 = best_constant_gq(kernel, space, q, base.fields())?.constant;
    let mut all = base.clone();
    all.extend(extra.clone());
    let k1 = best_constant_gq(kernel, space, q, all.fields())?.constant;
    Ok(if k0 > 0.0 {
        (k1 - k0) / k0
    } else if k1 > 0.0 {
        f64::INFINITY
    } else {
        0.0
    })
}
