//! Text formats: edge lists, metric/kernel matrices, measures, fields,
//! sparse plans and sample clouds.
//!
//! Numbers are written with the shortest representation that parses back to
//! the same `f64`, so a write/read round trip is bit-exact.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::heisenberg::{area_dim, Cloud};
use crate::kernels::MarkovKernel;
use crate::metric::{FiniteMetricSpace, WeightedGraph};
use crate::slope::ScalarField;
use crate::transport::{Coupling, DiscreteMeasure};
use crate::{Error, Result};

/// Shortest round-trip decimal; integral values print without a fraction.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() && v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:?}")
    }
}

pub fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Malformed(format!("{what}: cannot parse `{}` as a number", field.trim())))
}

fn parse_index(field: &str, what: &str) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::Malformed(format!("{what}: cannot parse `{}` as an index", field.trim())))
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Malformed(format!("`{}` has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One `u v w` triple per line, 0-based; blank lines and `#` comments are
/// skipped. The vertex count is one more than the largest index.
pub fn read_edge_list(reader: impl Read) -> Result<WeightedGraph> {
    let mut edges = Vec::new();
    let mut n = 0;
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let parts: Vec<&str> = body.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Malformed(format!(
                "edge list line {}: expected `u v w`, found {} fields",
                lineno + 1,
                parts.len()
            )));
        }
        let what = format!("edge list line {}", lineno + 1);
        let u = parse_index(parts[0], &what)?;
        let v = parse_index(parts[1], &what)?;
        let w = parse_f64(parts[2], &what)?;
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v, w));
    }
    if edges.is_empty() {
        return Err(Error::Empty("edge list has no edges"));
    }
    WeightedGraph::new(n, edges)
}

pub fn read_edge_list_path(path: &Path) -> Result<WeightedGraph> {
    read_edge_list(fs::File::open(path)?)
}

pub fn write_edge_list(mut w: impl Write, graph: &WeightedGraph) -> Result<()> {
    for &(u, v, weight) in graph.edges() {
        writeln!(w, "{u} {v} {}", fmt_f64(weight))?;
    }
    Ok(())
}

fn write_matrix(w: impl Write, header: &[String], m: &Array2<f64>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in m.rows() {
        out.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    out.flush()?;
    Ok(())
}

fn read_matrix(r: impl Read, what: &str) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let n = header.len();
    let mut data = Vec::with_capacity(n * n);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rec.len(),
            });
        }
        for field in rec.iter() {
            data.push(parse_f64(field, what)?);
        }
        rows += 1;
    }
    let m = Array2::from_shape_vec((rows, n), data).map_err(|e| Error::Malformed(e.to_string()))?;
    Ok((header, m))
}

/// Distance matrix with a header row of point identifiers.
pub fn write_metric_csv(w: impl Write, space: &FiniteMetricSpace) -> Result<()> {
    write_matrix(w, space.ids(), space.dist())
}

pub fn read_metric_csv(r: impl Read) -> Result<FiniteMetricSpace> {
    let (ids, m) = read_matrix(r, "metric")?;
    FiniteMetricSpace::new(ids, m)
}

/// Dense row-stochastic matrix; the header holds column indices.
pub fn write_kernel_csv(w: impl Write, kernel: &MarkovKernel) -> Result<()> {
    let header: Vec<String> = (0..kernel.len()).map(|i| i.to_string()).collect();
    write_matrix(w, &header, kernel.rows())
}

pub fn read_kernel_csv(r: impl Read) -> Result<MarkovKernel> {
    MarkovKernel::new(read_matrix(r, "kernel")?.1)
}

fn write_indexed(w: impl Write, column: &str, values: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", column])?;
    for (i, v) in values.iter().enumerate() {
        out.write_record([i.to_string(), fmt_f64(*v)])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `index,value` rows; missing indices below `len` are zero.
fn read_indexed(r: impl Read, what: &str, len: Option<usize>) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Malformed(format!(
                "{what}: expected 2 columns, found {}",
                rec.len()
            )));
        }
        entries.push((parse_index(&rec[0], what)?, parse_f64(&rec[1], what)?));
    }
    let n = match len {
        Some(n) => n,
        None => entries.iter().map(|e| e.0 + 1).max().unwrap_or(0),
    };
    let mut values = vec![0.0; n];
    let mut seen = vec![false; n];
    for (i, v) in entries {
        if i >= n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: i + 1,
            });
        }
        if seen[i] {
            return Err(Error::Malformed(format!("{what}: index {i} appears twice")));
        }
        seen[i] = true;
        values[i] = v;
    }
    Ok(values)
}

pub fn write_measure_csv(w: impl Write, mu: &DiscreteMeasure) -> Result<()> {
    write_indexed(w, "weight", mu.weights())
}

pub fn read_measure_csv(r: impl Read, len: Option<usize>) -> Result<DiscreteMeasure> {
    DiscreteMeasure::new(read_indexed(r, "measure", len)?)
}

pub fn write_field_csv(w: impl Write, f: &ScalarField) -> Result<()> {
    write_indexed(w, "value", f.values())
}

pub fn read_field_csv(r: impl Read, len: Option<usize>) -> Result<ScalarField> {
    ScalarField::new(read_indexed(r, "field", len)?)
}

/// Positive entries as `i,j,mass`.
pub fn write_plan_csv(w: impl Write, plan: &Coupling) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["i", "j", "mass"])?;
    for (i, j, m) in plan.triples() {
        out.write_record([i.to_string(), j.to_string(), fmt_f64(m)])?;
    }
    out.flush()?;
    Ok(())
}

/// Dense `rows × cols` matrix from sparse triples.
pub fn read_plan_csv(r: impl Read, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut plan = Array2::zeros((rows, cols));
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Malformed(format!(
                "plan: expected 3 columns, found {}",
                rec.len()
            )));
        }
        let i = parse_index(&rec[0], "plan")?;
        let j = parse_index(&rec[1], "plan")?;
        if i >= rows || j >= cols {
            return Err(Error::DimensionMismatch {
                expected: rows.max(cols),
                found: i.max(j) + 1,
            });
        }
        plan[[i, j]] += parse_f64(&rec[2], "plan")?;
    }
    Ok(plan)
}

fn cloud_header(n: usize) -> Vec<String> {
    let mut h = vec!["sample".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    for i in 1..=n {
        for j in i + 1..=n {
            h.push(format!("z{i}{j}"));
        }
    }
    h
}

/// `sample,x1..xn,z12..` with area columns in lexicographic pair order.
pub fn write_cloud_csv(w: impl Write, cloud: &Cloud) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(cloud_header(cloud.n()))?;
    for s in 0..cloud.len() {
        let mut rec = vec![s.to_string()];
        rec.extend(cloud.coords(s).iter().map(|v| fmt_f64(*v)));
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_cloud_csv(r: impl Read) -> Result<Cloud> {
    let mut rdr = csv::Reader::from_reader(r);
    let width = rdr.headers()?.len();
    let n = (2..=64)
        .find(|&n| 1 + n + area_dim(n) == width)
        .ok_or_else(|| Error::Malformed(format!("cloud: {width} columns do not match any dimension")))?;
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: rec.len(),
            });
        }
        for field in rec.iter().skip(1) {
            data.push(parse_f64(field, "cloud")?);
        }
    }
    Cloud::from_flat(n, data)
}
