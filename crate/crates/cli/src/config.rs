//! Experiment configuration: a TOML document with `key = value` sections,
//! optionally patched by `--override key=value` flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wasser_dual::Exponent;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Wasserstein,
    HopfLax,
    CheckDuality,
    SimulateHeisenberg,
    Audit,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::Wasserstein,
        Command::HopfLax,
        Command::CheckDuality,
        Command::SimulateHeisenberg,
        Command::Audit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Wasserstein => "wasserstein",
            Command::HopfLax => "hopf-lax",
            Command::CheckDuality => "check-duality",
            Command::SimulateHeisenberg => "simulate-heisenberg",
            Command::Audit => "audit",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::Input(format!("command: unknown command `{s}`")))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    /// `torus`, `interval`, `edge-list` or `metric-csv`.
    pub source: Option<String>,
    pub n: Option<usize>,
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// `heat`, `random-walk`, `identity`, `collapse`, `csv` or `heisenberg`.
    pub kind: Option<String>,
    pub t: Option<f64>,
    /// `wrapped-gaussian` or `graph-laplacian`.
    pub construction: Option<String>,
    pub steps: Option<usize>,
    pub laziness: Option<f64>,
    pub target: Option<usize>,
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuresConfig {
    pub mu: Option<Vec<f64>>,
    pub nu: Option<Vec<f64>>,
    pub mu_path: Option<PathBuf>,
    pub nu_path: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub cone_stride: Option<usize>,
    pub fourier_modes: Option<usize>,
    pub mcshane: Option<usize>,
    pub hopf_lax: Option<usize>,
    /// Adds Kantorovich potentials and measures how much they raise `K_G`.
    pub potentials: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualityConfig {
    /// `anchored`, `all` or `shell`.
    pub pairs: Option<String>,
    pub anchor: Option<usize>,
    /// Number of random `(μ, ν)` instances for the gluing audit.
    pub gluing_instances: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopfLaxConfig {
    /// `coordinate`, `cone:<x0>`, `sin:<k>` or `csv`.
    pub field: Option<String>,
    pub field_path: Option<PathBuf>,
    pub p: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeisenbergConfig {
    pub t: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub steps: Option<usize>,
    pub samples: Option<usize>,
    /// Flat coordinates `x1..xn, z12..`.
    pub start: Option<Vec<f64>>,
    pub pairs: Option<usize>,
    pub thin_to: Option<usize>,
    pub resamples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub duality_gap: f64,
    pub margin: f64,
    pub support: f64,
    pub marginal: f64,
    pub kantorovich: f64,
    pub monotone: f64,
    pub gluing: f64,
    /// Defaults to five times the mesh.
    pub semigroup: Option<f64>,
    pub corpus_adequacy: f64,
    /// Horizontal means must lie within this many `sqrt(t / samples)`.
    pub mean_sigmas: f64,
    pub variance_rel: f64,
    /// Area means must lie within this many batch standard errors.
    pub area_sigmas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            duality_gap: 0.05,
            margin: 1e-6,
            support: 1e-10,
            marginal: 1e-10,
            kantorovich: 1e-8,
            monotone: 1e-10,
            gluing: 1e-8,
            semigroup: None,
            corpus_adequacy: 0.01,
            mean_sigmas: 4.0,
            variance_rel: 0.05,
            area_sigmas: 3.0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Array of numbers and `"inf"`, or a comma-separated string.
    pub p_list: Option<toml::Value>,
    #[serde(default)]
    pub space: SpaceConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub measures: MeasuresConfig,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub duality: DualityConfig,
    #[serde(default)]
    pub hopf_lax: HopfLaxConfig,
    #[serde(default)]
    pub heisenberg: HeisenbergConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Sets a dotted `key` in `table` to the TOML reading of `raw` (or the bare
/// string when it does not parse).
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("override: `{spec}` is not of the form key=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Input(format!("override: invalid key `{key}`")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Input(format!("override: `{part}` in `{key}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

fn resolve(base: &Path, p: &mut Option<PathBuf>, field: &str) -> Result<(), CliError> {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
        if !path.exists() {
            return Err(CliError::Input(format!(
                "{field}: file `{}` does not exist",
                path.display()
            )));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_table(table: toml::Table) -> Result<Self, CliError> {
        Self::deserialize(toml::Value::Table(table))
            .map_err(|e| CliError::Input(format!("config: {}", one_line(&e.to_string()))))
    }

    /// Reads `path`, applies overrides and resolves relative file references
    /// against the config's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("config: cannot read `{}`: {e}", path.display())))?;
        let mut table: toml::Table = toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("config: {}", one_line(e.message()))))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg = Self::from_table(table)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        resolve(&base, &mut cfg.space.path, "space.path")?;
        resolve(&base, &mut cfg.kernel.path, "kernel.path")?;
        resolve(&base, &mut cfg.measures.mu_path, "measures.mu_path")?;
        resolve(&base, &mut cfg.measures.nu_path, "measures.nu_path")?;
        resolve(&base, &mut cfg.hopf_lax.field_path, "hopf_lax.field_path")?;
        if let Some(out) = &mut cfg.out {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }

    /// Exponents in the order given; errors name `p_list`.
    pub fn p_list(&self) -> Result<Vec<Exponent>, CliError> {
        let items: Vec<toml::Value> = match &self.p_list {
            None => return Err(CliError::Input("p_list: missing".into())),
            Some(toml::Value::String(s)) => s
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| toml::Value::String(s.into()))
                .collect(),
            Some(toml::Value::Array(a)) => a.clone(),
            Some(v) => vec![v.clone()],
        };
        if items.is_empty() {
            return Err(CliError::Input("p_list empty".into()));
        }
        items.iter().map(parse_exponent).collect()
    }
}

fn parse_exponent(v: &toml::Value) -> Result<Exponent, CliError> {
    let p = match v {
        toml::Value::Integer(i) => *i as f64,
        toml::Value::Float(f) => *f,
        toml::Value::String(s) if s.eq_ignore_ascii_case("inf") => return Ok(Exponent::Infinite),
        toml::Value::String(s) => s
            .parse::<f64>()
            .map_err(|_| CliError::Input(format!("p_list: `{s}` is neither a number nor \"inf\"")))?,
        other => return Err(CliError::Input(format!("p_list: unsupported entry `{other}`"))),
    };
    if p.is_infinite() && p > 0.0 {
        return Ok(Exponent::Infinite);
    }
    Exponent::finite(p).map_err(|_| CliError::Input(format!("p_list: entry {p} must be >= 1 or \"inf\"")))
}

fn one_line(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}
