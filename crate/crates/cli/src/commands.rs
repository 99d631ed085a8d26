//! The five experiment commands. Each writes its detail tables and
//! `summary.csv` and returns the asserted checks.

use std::collections::BTreeMap;
use std::fs::File;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wasser_dual::duality::audit::{
    chebyshev_split_check, g_infty_prime_check, gluing_check, implication_audit, monotonicity_audit,
};
use wasser_dual::duality::corpus::{build_corpus, corpus_adequacy, Corpus, CorpusOptions};
use wasser_dual::duality::sampled::{default_start_pairs, sampled_constants, SampledExperiment};
use wasser_dual::duality::{all_pairs, anchored_pairs, duality_gap_report, pair_transports, shell_pairs};
use wasser_dual::heisenberg::{area_dim, sample_diffusion, SdeConfig, Step2Point};
use wasser_dual::hopf_lax::{
    hj_residual, hopf_lax, hopf_lax_lipschitz_bound, semigroup_defect, PowerLagrangian,
};
use wasser_dual::io;
use wasser_dual::kernels::{random_walk_kernel, torus_heat_kernel, HeatConstruction, MarkovKernel};
use wasser_dual::metric::FiniteMetricSpace;
use wasser_dual::slope::ScalarField;
use wasser_dual::transport::{wasserstein, DiscreteMeasure};
use wasser_dual::Exponent;

use crate::config::{Command, ExperimentConfig, KernelConfig, SpaceConfig};
use crate::output::{emit_plot_data, exponent, num, Checks, OutputDir, PlotRow, Table};
use crate::CliError;

fn field_err(field: &str) -> impl Fn(wasser_dual::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{field}: {e}"))
}

fn missing(field: &str) -> CliError {
    CliError::Input(format!("{field}: missing"))
}

struct Space {
    space: FiniteMetricSpace,
    cyclic: bool,
}

fn build_space(c: &SpaceConfig) -> Result<Space, CliError> {
    let source = c.source.as_deref().unwrap_or("torus");
    let n = || c.n.ok_or_else(|| missing("space.n"));
    let path = || c.path.as_ref().ok_or_else(|| missing("space.path"));
    let err = field_err("space");
    Ok(match source {
        "torus" => Space {
            space: FiniteMetricSpace::unit_torus(n()?).map_err(err)?,
            cyclic: true,
        },
        "interval" => Space {
            space: FiniteMetricSpace::unit_interval(n()?).map_err(err)?,
            cyclic: false,
        },
        "edge-list" => {
            let graph = io::read_edge_list_path(path()?).map_err(field_err("space.path"))?;
            Space {
                space: FiniteMetricSpace::shortest_path_space(graph).map_err(field_err("space.path"))?,
                cyclic: false,
            }
        }
        "metric-csv" => {
            let file = File::open(path()?)?;
            Space {
                space: io::read_metric_csv(file).map_err(field_err("space.path"))?,
                cyclic: false,
            }
        }
        other => return Err(CliError::Input(format!("space.source: unknown source `{other}`"))),
    })
}

enum Kernel {
    Deterministic(MarkovKernel),
    Sampled,
}

fn build_kernel(c: &KernelConfig, space: &Space) -> Result<Kernel, CliError> {
    let kind = c.kind.as_deref().ok_or_else(|| missing("kernel.kind"))?;
    let n = space.space.len();
    let kernel = match kind {
        "heat" => {
            if !space.cyclic {
                return Err(CliError::Input(
                    "kernel.kind: heat kernel needs space.source = torus".into(),
                ));
            }
            let t = c.t.ok_or_else(|| missing("kernel.t"))?;
            let construction = match c.construction.as_deref().unwrap_or("wrapped-gaussian") {
                "wrapped-gaussian" => HeatConstruction::WrappedGaussian,
                "graph-laplacian" => HeatConstruction::GraphLaplacian,
                other => {
                    return Err(CliError::Input(format!(
                        "kernel.construction: unknown construction `{other}`"
                    )))
                }
            };
            torus_heat_kernel(n, t, construction).map_err(field_err("kernel.t"))?
        }
        "random-walk" => {
            let graph = space.space.graph().ok_or_else(|| {
                CliError::Input("kernel.kind: random walk needs a graph-based space".into())
            })?;
            random_walk_kernel(graph, c.steps.unwrap_or(3), c.laziness.unwrap_or(0.5))
                .map_err(field_err("kernel"))?
        }
        "identity" => MarkovKernel::identity(n),
        "collapse" => {
            let target = c.target.unwrap_or(0);
            if target >= n {
                return Err(CliError::Input(format!(
                    "kernel.target: {target} is not a point of the space"
                )));
            }
            MarkovKernel::collapse(n, target)
        }
        "csv" => {
            let path = c.path.as_ref().ok_or_else(|| missing("kernel.path"))?;
            let k = io::read_kernel_csv(File::open(path)?).map_err(field_err("kernel.path"))?;
            if k.len() != n {
                return Err(CliError::Input(format!(
                    "kernel.path: kernel has {} rows but the space has {n} points",
                    k.len()
                )));
            }
            k
        }
        "heisenberg" => return Ok(Kernel::Sampled),
        other => return Err(CliError::Input(format!("kernel.kind: unknown kind `{other}`"))),
    };
    Ok(Kernel::Deterministic(kernel))
}

fn deterministic(cfg: &ExperimentConfig, space: &Space, command: Command) -> Result<MarkovKernel, CliError> {
    match build_kernel(&cfg.kernel, space)? {
        Kernel::Deterministic(k) => Ok(k),
        Kernel::Sampled => Err(CliError::Input(format!(
            "kernel.kind: {command} needs a deterministic kernel"
        ))),
    }
}

fn pairs_for(cfg: &ExperimentConfig, space: &Space) -> Result<Vec<(usize, usize)>, CliError> {
    let n = space.space.len();
    let default = if cfg.kernel.kind.as_deref() == Some("heat") {
        "anchored"
    } else {
        "all"
    };
    match cfg.duality.pairs.as_deref().unwrap_or(default) {
        "anchored" => {
            let anchor = cfg.duality.anchor.unwrap_or(0);
            if anchor >= n {
                return Err(CliError::Input(format!(
                    "duality.anchor: {anchor} is not a point of the space"
                )));
            }
            Ok(anchored_pairs(n, anchor))
        }
        "all" => Ok(all_pairs(n)),
        "shell" => Ok(shell_pairs(&space.space)),
        other => Err(CliError::Input(format!(
            "duality.pairs: unknown pair set `{other}`"
        ))),
    }
}

/// Base corpus and the Kantorovich-potential extension (possibly empty).
fn corpora(
    cfg: &ExperimentConfig,
    space: &Space,
    kernel: &MarkovKernel,
    pairs: &[(usize, usize)],
) -> Result<(Corpus, Corpus), CliError> {
    let c = &cfg.corpus;
    let opts = CorpusOptions {
        cone_stride: c.cone_stride.unwrap_or(1),
        fourier_modes: c.fourier_modes.unwrap_or(if space.cyclic { 4 } else { 0 }),
        mcshane: c.mcshane.unwrap_or(16),
        hopf_lax: c.hopf_lax.unwrap_or(16),
        seed: cfg.seed.unwrap_or(0),
    };
    let base = build_corpus(&space.space, &opts).map_err(field_err("corpus"))?;
    let mut extra = Corpus::default();
    if c.potentials.unwrap_or(true) {
        let ts = pair_transports(kernel, &space.space, Exponent::Finite(2.0), pairs)?;
        extra.add_potentials(&ts);
    }
    Ok((base, extra))
}

fn tag(p: Exponent) -> String {
    exponent(p)
}

fn measure(
    inline: &Option<Vec<f64>>,
    path: &Option<std::path::PathBuf>,
    field: &str,
    n: usize,
) -> Result<DiscreteMeasure, CliError> {
    let m = match (inline, path) {
        (Some(w), None) => DiscreteMeasure::from_masses(w).map_err(field_err(field))?,
        (None, Some(p)) => io::read_measure_csv(File::open(p)?, Some(n)).map_err(field_err(field))?,
        (Some(_), Some(_)) => {
            return Err(CliError::Input(format!(
                "{field}: give either inline weights or a path, not both"
            )))
        }
        (None, None) => return Err(missing(field)),
    };
    if m.len() != n {
        return Err(CliError::Input(format!(
            "{field}: {} weights for a space of {n} points",
            m.len()
        )));
    }
    Ok(m)
}

pub fn run(command: Command, cfg: &ExperimentConfig, out: &OutputDir) -> Result<Checks, CliError> {
    match command {
        Command::Wasserstein => run_wasserstein(cfg, out),
        Command::HopfLax => run_hopf_lax(cfg, out),
        Command::CheckDuality => run_check_duality(cfg, out),
        Command::SimulateHeisenberg => run_simulate(cfg, out),
        Command::Audit => run_audit(cfg, out),
    }
}

fn run_wasserstein(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Checks, CliError> {
    let space = build_space(&cfg.space)?;
    let n = space.space.len();
    let mu = measure(&cfg.measures.mu, &cfg.measures.mu_path, "measures.mu", n)?;
    let nu = measure(&cfg.measures.nu, &cfg.measures.nu_path, "measures.nu", n)?;
    let ps = cfg.p_list()?;
    let tol = &cfg.tolerances;
    let mut checks = Checks::default();
    let mut summary = Table::new(&["quantity", "value"]);
    let mut values = Vec::new();
    for &p in &ps {
        let sol = wasserstein(&space.space, &mu, &nu, p)?;
        let t = tag(p);
        summary.push(vec![format!("W_{t}"), num(sol.value)]);
        values.push((p, sol.value));

        let plan_name = format!("plan_p{t}.csv");
        let mut buf = Vec::new();
        io::write_plan_csv(&mut buf, &sol.plan)?;
        out.write_bytes(&plan_name, &buf)?;
        let marginal = sol
            .plan
            .row_marginal()
            .iter()
            .zip(mu.weights())
            .chain(sol.plan.col_marginal().iter().zip(nu.weights()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        checks.at_most(format!("marginal_error_p{t}"), &plan_name, marginal, tol.marginal);

        if let Some(pot) = &sol.potentials {
            let name = format!("potentials_p{t}.csv");
            let mut table = Table::new(&["index", "f", "f_star"]);
            for i in 0..n {
                table.push(vec![
                    i.to_string(),
                    num(pot.f.values()[i]),
                    num(pot.f_star.values()[i]),
                ]);
            }
            out.write_table(&name, &table)?;
            let dual = mu.integrate(&pot.f_star) - nu.integrate(&pot.f);
            let gap = (sol.value.powf(pot.p) - dual).abs();
            checks.at_most(format!("kantorovich_gap_p{t}"), &name, gap, tol.kantorovich);
        }
    }
    values.sort_by(|a, b| a.0.value().total_cmp(&b.0.value()));
    let drop = values.windows(2).map(|w| w[0].1 - w[1].1).fold(0.0, f64::max);
    if values.len() > 1 {
        checks.at_most("monotone_in_p", "summary.csv", drop, tol.monotone);
    }
    out.write_table("summary.csv", &summary)?;
    Ok(checks)
}

fn hopf_lax_field(cfg: &ExperimentConfig, space: &FiniteMetricSpace) -> Result<ScalarField, CliError> {
    let n = space.len();
    if let Some(path) = &cfg.hopf_lax.field_path {
        return io::read_field_csv(File::open(path)?, Some(n)).map_err(field_err("hopf_lax.field_path"));
    }
    let spec = cfg.hopf_lax.field.as_deref().unwrap_or("coordinate");
    let index = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| CliError::Input(format!("hopf_lax.field: cannot parse `{s}`")))
    };
    if spec == "coordinate" {
        return Ok(ScalarField::distance_cone(space, 0));
    }
    if let Some(x0) = spec.strip_prefix("cone:") {
        let x0 = index(x0)?;
        if x0 >= n {
            return Err(CliError::Input(format!(
                "hopf_lax.field: {x0} is not a point of the space"
            )));
        }
        return Ok(ScalarField::distance_cone(space, x0));
    }
    if let Some(k) = spec.strip_prefix("sin:") {
        let k = index(k)? as f64;
        return ScalarField::from_fn(n, |i| (std::f64::consts::TAU * k * i as f64 / n as f64).sin())
            .map_err(field_err("hopf_lax.field"));
    }
    Err(CliError::Input(format!("hopf_lax.field: unknown field `{spec}`")))
}

fn run_hopf_lax(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Checks, CliError> {
    let space = build_space(&cfg.space)?.space;
    let f = hopf_lax_field(cfg, &space)?;
    let l = PowerLagrangian::new(cfg.hopf_lax.p.unwrap_or(2.0)).map_err(field_err("hopf_lax.p"))?;
    let mut times = cfg
        .hopf_lax
        .times
        .clone()
        .ok_or_else(|| missing("hopf_lax.times"))?;
    if times.is_empty() {
        return Err(CliError::Input("hopf_lax.times: empty".into()));
    }
    if times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(CliError::Input("hopf_lax.times: times must be positive".into()));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let sigma = cfg.hopf_lax.sigma.unwrap_or(1e-3);
    let tol = &cfg.tolerances;
    let semigroup_tol = tol.semigroup.unwrap_or(5.0 * space.mesh());

    let layers = times
        .iter()
        .map(|&t| hopf_lax(&f, t, &l, &space))
        .collect::<wasser_dual::Result<Vec<_>>>()?;
    let mut header = vec!["index".to_string(), "f".to_string()];
    header.extend(times.iter().map(|t| format!("Q_{}", num(*t))));
    let mut values = Table::with_header(header);
    for i in 0..space.len() {
        let mut row = vec![i.to_string(), num(f.values()[i])];
        row.extend(layers.iter().map(|q| num(q.values()[i])));
        values.push(row);
    }
    out.write_table("hopf_lax.csv", &values)?;

    let mut checks = Checks::default();
    let mut summary = Table::new(&[
        "t",
        "max_decrease",
        "hj_residual_max",
        "semigroup_defect",
        "lipschitz",
        "lipschitz_bound",
    ]);
    let bound = hopf_lax_lipschitz_bound(&f, &l, &space, &times)?;
    for (k, (&t, q)) in times.iter().zip(&layers).enumerate() {
        let increase = q
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max);
        let decrease = f
            .values()
            .iter()
            .zip(q.values())
            .map(|(a, b)| a - b)
            .fold(0.0, f64::max);
        let residual = hj_residual(&f, t, sigma, &l, &space)?
            .iter()
            .map(|r| r.abs())
            .fold(0.0, f64::max);
        let defect = semigroup_defect(&f, t, t, &l, &space)?;
        summary.push(vec![
            num(t),
            num(decrease),
            num(residual),
            num(defect),
            num(bound.measured),
            num(bound.bound),
        ]);
        let tt = num(t);
        checks.at_most(format!("q_below_f_t{tt}"), "hopf_lax.csv", increase, 1e-12);
        checks.at_most(format!("semigroup_t{tt}"), "summary.csv", defect, semigroup_tol);
        if k > 0 {
            let rise = q
                .values()
                .iter()
                .zip(layers[k - 1].values())
                .map(|(a, b)| a - b)
                .fold(f64::NEG_INFINITY, f64::max);
            checks.at_most(format!("monotone_in_t{tt}"), "hopf_lax.csv", rise, 1e-12);
        }
    }
    checks.at_most(
        "lipschitz_bound",
        "summary.csv",
        bound.measured - bound.bound,
        1e-12 * (1.0 + bound.bound),
    );
    out.write_table("summary.csv", &summary)?;
    Ok(checks)
}

fn run_check_duality(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Checks, CliError> {
    let ps = cfg.p_list()?;
    if cfg.kernel.kind.as_deref() == Some("heisenberg") {
        return run_sampled_duality(cfg, out, &ps);
    }
    let space = build_space(&cfg.space)?;
    match build_kernel(&cfg.kernel, &space)? {
        Kernel::Sampled => run_sampled_duality(cfg, out, &ps),
        Kernel::Deterministic(kernel) => {
            let tol = &cfg.tolerances;
            let pairs = pairs_for(cfg, &space)?;
            let (base, extra) = corpora(cfg, &space, &kernel, &pairs)?;
            let mut all = base.clone();
            all.extend(extra.clone());
            let labels = all.labels().to_vec();

            let mut checks = Checks::default();
            let mut summary = Table::new(&[
                "p",
                "q",
                "K_C",
                "K_G",
                "gap",
                "tolerance",
                "mesh",
                "chain_error",
                "corpus_adequacy",
            ]);
            let mut pair_table = Table::new(&["p", "x", "y", "distance", "W", "ratio", "margin"]);
            let mut fn_table = Table::new(&["p", "field", "label", "x", "lhs", "rhs", "ratio", "margin"]);
            let mut plot = Vec::new();
            for &p in &ps {
                let r = duality_gap_report(&kernel, &space.space, p, &pairs, all.fields())?;
                let adequacy = if extra.is_empty() {
                    0.0
                } else {
                    corpus_adequacy(&kernel, &space.space, p.conjugate(), &base, &extra)?
                };
                let t = tag(p);
                summary.push(vec![
                    t.clone(),
                    exponent(r.q),
                    num(r.k_c),
                    num(r.k_g),
                    num(r.gap()),
                    num(tol.duality_gap),
                    num(r.mesh),
                    num(r.chain_error),
                    num(adequacy),
                ]);
                let mut min_pair = f64::INFINITY;
                for m in &r.pair_margins {
                    let d = space.space.d(m.x, m.y);
                    pair_table.push(vec![
                        t.clone(),
                        m.x.to_string(),
                        m.y.to_string(),
                        num(d),
                        num(m.w),
                        num(m.w / d),
                        num(m.margin),
                    ]);
                    min_pair = min_pair.min(m.margin);
                }
                let mut min_fn = f64::INFINITY;
                for (term, margin) in &r.fn_margins {
                    fn_table.push(vec![
                        t.clone(),
                        term.field.to_string(),
                        labels[term.field].clone(),
                        term.x.map(|x| x.to_string()).unwrap_or_default(),
                        num(term.lhs),
                        num(term.rhs),
                        num(term.ratio()),
                        num(*margin),
                    ]);
                    min_fn = min_fn.min(*margin);
                }
                checks.at_most(
                    format!("duality_gap_p{t}"),
                    "summary.csv",
                    r.gap(),
                    tol.duality_gap,
                );
                checks.at_most(
                    format!("corpus_adequacy_p{t}"),
                    "summary.csv",
                    adequacy,
                    tol.corpus_adequacy,
                );
                checks.at_least_neg(format!("pair_margin_p{t}"), "pairs.csv", min_pair, tol.margin);
                checks.at_least_neg(
                    format!("function_margin_p{t}"),
                    "functions.csv",
                    min_fn,
                    tol.margin,
                );
                plot.push(PlotRow {
                    p,
                    k_c: r.k_c,
                    k_g: Some(r.k_g),
                    ci_halfwidth: r.mc_ci.unwrap_or(0.0),
                    mesh: r.mesh,
                });
            }
            out.write_table("pairs.csv", &pair_table)?;
            out.write_table("functions.csv", &fn_table)?;
            out.write_table("plot.csv", &emit_plot_data(&plot))?;
            out.write_table("summary.csv", &summary)?;
            Ok(checks)
        }
    }
}

fn heisenberg_times(cfg: &ExperimentConfig, default: f64) -> Result<Vec<f64>, CliError> {
    let h = &cfg.heisenberg;
    let times = match (&h.times, h.t) {
        (Some(ts), _) => ts.clone(),
        (None, Some(t)) => vec![t],
        (None, None) => vec![default],
    };
    if times.is_empty() || times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(CliError::Input("heisenberg.times: times must be positive".into()));
    }
    Ok(times)
}

fn require_seed(cfg: &ExperimentConfig) -> Result<u64, CliError> {
    cfg.seed
        .ok_or_else(|| CliError::Input("seed: required for sampled kernels".into()))
}

fn run_sampled_duality(cfg: &ExperimentConfig, out: &OutputDir, ps: &[Exponent]) -> Result<Checks, CliError> {
    let seed = require_seed(cfg)?;
    let h = &cfg.heisenberg;
    let mut exp = SampledExperiment::new(
        heisenberg_times(cfg, 0.25)?,
        default_start_pairs(h.pairs.unwrap_or(10), seed),
        seed,
    );
    exp.p_list = ps.to_vec();
    if let Some(v) = h.steps {
        exp.steps = v;
    }
    if let Some(v) = h.samples {
        exp.samples = v;
    }
    if let Some(v) = h.thin_to {
        exp.thin_to = v;
    }
    if let Some(v) = h.resamples {
        exp.resamples = v;
    }
    let results = sampled_constants(&exp).map_err(field_err("heisenberg"))?;
    let mut checks = Checks::default();
    let mut summary = Table::new(&[
        "p",
        "t",
        "K_C",
        "ci_low",
        "ci_high",
        "ci_halfwidth",
        "thinning_spread",
    ]);
    let mut pairs = Table::new(&["p", "t", "pair", "ratio"]);
    let mut plots: BTreeMap<String, Vec<PlotRow>> = BTreeMap::new();
    for c in &results {
        let (p, t) = (tag(c.p), num(c.t));
        summary.push(vec![
            p.clone(),
            t.clone(),
            num(c.estimate),
            num(c.ci_low),
            num(c.ci_high),
            num(c.half_width()),
            num(c.thinning_spread),
        ]);
        for (k, r) in c.per_pair.iter().enumerate() {
            pairs.push(vec![p.clone(), t.clone(), k.to_string(), num(*r)]);
        }
        let finite = if c.estimate.is_finite() && c.ci_high.is_finite() {
            0.0
        } else {
            1.0
        };
        checks.at_most(format!("finite_p{p}_t{t}"), "summary.csv", finite, 0.0);
        plots.entry(t).or_default().push(PlotRow {
            p: c.p,
            k_c: c.estimate,
            k_g: None,
            ci_halfwidth: c.half_width(),
            mesh: 0.0,
        });
    }
    out.write_table("pairs.csv", &pairs)?;
    for (t, rows) in &plots {
        out.write_table(&format!("plot_t{t}.csv"), &emit_plot_data(rows))?;
    }
    out.write_table("summary.csv", &summary)?;
    Ok(checks)
}

fn start_point(cfg: &ExperimentConfig) -> Result<Step2Point, CliError> {
    let Some(flat) = &cfg.heisenberg.start else {
        return Ok(Step2Point::identity(2));
    };
    let n = (2..=32).find(|&n| n + area_dim(n) == flat.len()).ok_or_else(|| {
        CliError::Input(format!(
            "heisenberg.start: {} coordinates match no dimension",
            flat.len()
        ))
    })?;
    Step2Point::from_flat(n, flat).map_err(field_err("heisenberg.start"))
}

fn run_simulate(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Checks, CliError> {
    let seed = require_seed(cfg)?;
    let h = &cfg.heisenberg;
    let t = match h.t {
        Some(t) => t,
        None => heisenberg_times(cfg, 1.0)?[0],
    };
    let sde = SdeConfig {
        t,
        steps: h.steps.unwrap_or(1000),
        samples: h.samples.unwrap_or(10_000),
        seed,
        start: start_point(cfg)?,
    };
    let cloud = sample_diffusion(&sde).map_err(field_err("heisenberg"))?;
    let mut buf = Vec::new();
    io::write_cloud_csv(&mut buf, &cloud)?;
    out.write_bytes("cloud.csv", &buf)?;

    let tol = &cfg.tolerances;
    let n = cloud.n();
    let mean = cloud.mean();
    let var = cloud.variance();
    let se = cloud.batch_standard_error(100.min(cloud.len()));
    let start = sde.start.flat();
    let names: Vec<String> = (1..=n)
        .map(|i| format!("x{i}"))
        .chain((1..=n).flat_map(|i| (i + 1..=n).map(move |j| format!("z{i}{j}"))))
        .collect();
    let mut summary = Table::new(&["coordinate", "start", "mean", "variance", "standard_error"]);
    let mut checks = Checks::default();
    let samples = sde.samples as f64;
    let mean_tol = tol.mean_sigmas * (t / samples).sqrt();
    let var_tol = tol.variance_rel.max(4.0 * (2.0 / samples).sqrt());
    for (k, name) in names.iter().enumerate() {
        summary.push(vec![
            name.clone(),
            num(start[k]),
            num(mean[k]),
            num(var[k]),
            num(se[k]),
        ]);
        if k < n {
            checks.at_most(
                format!("mean_{name}"),
                "summary.csv",
                (mean[k] - start[k]).abs(),
                mean_tol,
            );
            checks.at_most(
                format!("variance_{name}"),
                "summary.csv",
                (var[k] - t).abs() / t,
                var_tol,
            );
        } else {
            let z = if se[k] > 0.0 {
                (mean[k] - start[k]).abs() / se[k]
            } else {
                0.0
            };
            checks.at_most(format!("mean_{name}"), "summary.csv", z, tol.area_sigmas);
        }
    }
    out.write_table("summary.csv", &summary)?;
    Ok(checks)
}

fn run_audit(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Checks, CliError> {
    let space = build_space(&cfg.space)?;
    let kernel = deterministic(cfg, &space, Command::Audit)?;
    let ps = cfg.p_list()?;
    if ps.windows(2).any(|w| w[1].value() <= w[0].value()) {
        return Err(CliError::Input(
            "p_list: must be strictly increasing for audit".into(),
        ));
    }
    let tol = &cfg.tolerances;
    let pairs = pairs_for(cfg, &space)?;
    let (base, extra) = corpora(cfg, &space, &kernel, &pairs)?;
    let mut corpus = base;
    corpus.extend(extra);
    let labels = corpus.labels().to_vec();
    let mut checks = Checks::default();

    let mut audit_ps = ps.clone();
    if !audit_ps.last().is_some_and(|p| p.is_infinite()) {
        audit_ps.push(Exponent::Infinite);
    }
    let mono = monotonicity_audit(&kernel, &space.space, &pairs, &audit_ps)?;
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend(audit_ps.iter().map(|p| format!("W_{}", tag(*p))));
    let mut mono_table = Table::with_header(header);
    for ((x, y), row) in mono.pairs.iter().zip(&mono.values) {
        let mut r = vec![x.to_string(), y.to_string()];
        r.extend(row.iter().map(|v| num(*v)));
        mono_table.push(r);
    }
    out.write_table("monotonicity.csv", &mono_table)?;
    checks.at_most(
        "w_p_monotone_per_pair",
        "monotonicity.csv",
        mono.worst_pair_drop,
        tol.monotone,
    );
    checks.at_most(
        "k_c_monotone",
        "summary.csv",
        mono.worst_constant_drop,
        tol.monotone,
    );
    let k_c: BTreeMap<String, f64> = audit_ps
        .iter()
        .zip(&mono.constants)
        .map(|(p, k)| (tag(*p), *k))
        .collect();

    let mut summary = Table::new(&[
        "p",
        "K_C",
        "implication_min_margin",
        "support_excess",
        "chebyshev_min_margin",
    ]);
    let mut implication = Table::new(&["p", "field", "label", "x", "lhs", "rhs", "margin"]);
    let mut chebyshev = Table::new(&["p", "field", "label", "x", "lhs", "bound", "margin"]);
    for &p in &ps {
        let t = tag(p);
        let kc = k_c[&t];
        let a = implication_audit(&kernel, &space.space, p, corpus.fields(), kc)?;
        for m in &a.margins {
            implication.push(vec![
                t.clone(),
                m.field.to_string(),
                labels[m.field].clone(),
                m.x.to_string(),
                num(m.lhs),
                num(m.rhs),
                num(m.margin),
            ]);
        }
        checks.at_least_neg(
            format!("implication_p{t}"),
            "implication.csv",
            a.min_margin,
            tol.margin,
        );
        if p.is_infinite() {
            checks.at_most(
                "support_within_scaled_distance",
                "summary.csv",
                a.support_excess,
                tol.support,
            );
        }
        let cheb_min = match p {
            Exponent::Finite(pv) => {
                let c = chebyshev_split_check(&kernel, &space.space, pv, &pairs, corpus.fields())?;
                for m in &c.margins {
                    chebyshev.push(vec![
                        t.clone(),
                        m.field.to_string(),
                        labels[m.field].clone(),
                        m.x.to_string(),
                        num(m.lhs),
                        num(m.rhs),
                        num(m.margin),
                    ]);
                }
                checks.at_least_neg(
                    format!("chebyshev_p{t}"),
                    "chebyshev.csv",
                    c.min_margin,
                    tol.margin,
                );
                num(c.min_margin)
            }
            Exponent::Infinite => String::new(),
        };
        summary.push(vec![
            t.clone(),
            num(kc),
            num(a.min_margin),
            if p.is_infinite() {
                num(a.support_excess)
            } else {
                String::new()
            },
            cheb_min,
        ]);
    }
    out.write_table("implication.csv", &implication)?;
    out.write_table("chebyshev.csv", &chebyshev)?;

    let k_prime = ps
        .iter()
        .find(|p| p.value() > 1.0)
        .map(|p| k_c[&tag(*p)])
        .filter(|k| *k > 0.0)
        .unwrap_or(1.0);
    let g = g_infty_prime_check(&kernel, &space.space, corpus.fields(), k_prime, tol.margin)?;
    let mut g_table = Table::new(&["field", "label", "x", "lhs_over_k", "ess_sup_slope", "margin"]);
    for m in &g.margins {
        g_table.push(vec![
            m.field.to_string(),
            labels[m.field].clone(),
            m.x.to_string(),
            num(m.lhs),
            num(m.rhs),
            num(m.margin),
        ]);
    }
    out.write_table("g_infty_prime.csv", &g_table)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0));
    let n = space.space.len();
    let mut gluing = Table::new(&[
        "instance",
        "p",
        "lhs",
        "rhs",
        "glued_cost",
        "identity_defect",
        "marginal_defect",
    ]);
    let mut worst_identity: f64 = 0.0;
    let mut worst_excess = f64::NEG_INFINITY;
    for inst in 0..cfg.duality.gluing_instances.unwrap_or(5) {
        let mut draw = || {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            DiscreteMeasure::from_masses(&w)
        };
        let mu = draw()?;
        let nu = draw()?;
        for &p in ps.iter().filter(|p| !p.is_infinite()) {
            let r = gluing_check(&kernel, &space.space, &mu, &nu, p.value())?;
            gluing.push(vec![
                inst.to_string(),
                tag(p),
                num(r.lhs),
                num(r.rhs),
                num(r.glued_cost),
                num(r.identity_defect),
                num(r.marginal_defect),
            ]);
            worst_identity = worst_identity.max(r.identity_defect);
            worst_excess = worst_excess.max(r.lhs - r.rhs);
        }
    }
    out.write_table("gluing.csv", &gluing)?;
    if !gluing.rows().is_empty() {
        checks.at_most("gluing_identity", "gluing.csv", worst_identity, tol.gluing);
        checks.at_most("gluing_inequality", "gluing.csv", worst_excess, tol.gluing);
    }

    let mut summary_rows = summary;
    summary_rows.push(vec![
        "g_infty_prime".into(),
        num(k_prime),
        num(g.margins.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min)),
        String::new(),
        String::new(),
    ]);
    out.write_table("summary.csv", &summary_rows)?;
    Ok(checks)
}
