//! Stream serialization: CSV for the points, a plain-text key-value sidecar
//! for the generating spec and seed.
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! parse -> write -> parse cycle is bit-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, NoiseFamily, SeasonalVarxSpec, StreamPoint, VarxSpec};

/// Everything needed to regenerate a simulated stream: the spec, the noise
/// family, and the run parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamMeta {
    pub spec: ModelSpec,
    pub noise_family: NoiseFamily,
    pub noise_df: Option<f64>,
    pub seed: u64,
    pub n: usize,
    pub burn_in: usize,
}

/// Writes points as `t,y1..yK[,v1..vK]`.
pub fn write_stream_csv(path: &Path, points: &[StreamPoint]) -> Result<()> {
    let first = points.first().ok_or(Error::EmptyInput {
        what: "stream points",
    })?;
    let k = first.y.len();
    let has_v = first.v.is_some();
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = String::from("t");
    for i in 1..=k {
        header.push_str(&format!(",y{i}"));
    }
    if has_v {
        for i in 1..=k {
            header.push_str(&format!(",v{i}"));
        }
    }
    writeln!(w, "{header}")?;
    for p in points {
        let mut line = p.t.to_string();
        for v in p.y.iter() {
            line.push(',');
            line.push_str(&v.to_string());
        }
        if has_v {
            let vv = p.v.as_ref().ok_or(Error::InvalidParameter {
                name: "stream",
                reason: "mixed presence of exogenous inputs".into(),
            })?;
            for v in vv.iter() {
                line.push(',');
                line.push_str(&v.to_string());
            }
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a stream written by [`write_stream_csv`], inferring the response
/// dimension and the presence of exogenous columns from the header.
pub fn read_stream_csv(path: &Path) -> Result<Vec<StreamPoint>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.first() != Some(&"t") {
        return Err(Error::InvalidParameter {
            name: "stream csv",
            reason: "first column must be t".into(),
        });
    }
    let k = names.iter().filter(|n| n.starts_with('y')).count();
    let kv = names.iter().filter(|n| n.starts_with('v')).count();
    if k == 0 || (kv != 0 && kv != k) {
        return Err(Error::InvalidParameter {
            name: "stream csv",
            reason: format!(
                "bad header layout: {} response, {} exogenous columns",
                k, kv
            ),
        });
    }
    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |idx: usize| -> Result<f64> {
            record
                .get(idx)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::BadNumber {
                    row,
                    column: names.get(idx).unwrap_or(&"?").to_string(),
                    value: record.get(idx).unwrap_or("").to_string(),
                })
        };
        let t: usize =
            record
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::BadNumber {
                    row,
                    column: "t".into(),
                    value: record.get(0).unwrap_or("").to_string(),
                })?;
        let mut y = DVector::zeros(k);
        for i in 0..k {
            y[i] = parse(1 + i)?;
        }
        let v = if kv > 0 {
            let mut v = DVector::zeros(k);
            for i in 0..k {
                v[i] = parse(1 + k + i)?;
            }
            Some(v)
        } else {
            None
        };
        points.push(StreamPoint { t, y, v });
    }
    Ok(points)
}

fn push_matrix(out: &mut String, key: &str, m: &DMatrix<f64>) {
    out.push_str(key);
    out.push_str(" =");
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(' ');
            out.push_str(&m[(r, c)].to_string());
        }
    }
    out.push('\n');
}

fn push_vector(out: &mut String, key: &str, v: &DVector<f64>) {
    out.push_str(key);
    out.push_str(" =");
    for x in v.iter() {
        out.push(' ');
        out.push_str(&x.to_string());
    }
    out.push('\n');
}

/// Renders the sidecar metadata as `key = value` lines.
pub fn render_stream_meta(meta: &StreamMeta) -> String {
    let mut s = String::new();
    match &meta.spec {
        ModelSpec::Varx(spec) => {
            s.push_str("kind = varx\n");
            s.push_str(&format!("k = {}\n", spec.k));
            s.push_str(&format!("p1 = {}\n", spec.p1));
            s.push_str(&format!("p2 = {}\n", spec.p2));
            for (i, m) in spec.phi.iter().enumerate() {
                push_matrix(&mut s, &format!("phi_{}", i + 1), m);
            }
            for (j, m) in spec.psi.iter().enumerate() {
                push_matrix(&mut s, &format!("psi_{}", j + 1), m);
            }
            push_matrix(&mut s, "omega", &spec.omega);
            push_vector(&mut s, "mu_y", &spec.mu_y);
            push_vector(&mut s, "mu_v", &spec.mu_v);
        }
        ModelSpec::Seasonal(spec) => {
            s.push_str("kind = seasonal_varx\n");
            s.push_str(&format!("k = {}\n", spec.k));
            s.push_str(&format!("p1 = {}\n", spec.p1));
            s.push_str(&format!("p2_seasonal = {}\n", spec.p2_seasonal));
            s.push_str(&format!("period = {}\n", spec.period));
            for (i, m) in spec.phi.iter().enumerate() {
                push_matrix(&mut s, &format!("phi_{}", i + 1), m);
            }
            for (i, m) in spec.theta.iter().enumerate() {
                push_matrix(&mut s, &format!("theta_{}", i + 1), m);
            }
            push_matrix(&mut s, "omega", &spec.omega);
            push_vector(&mut s, "mu_y", &spec.mu_y);
        }
    }
    s.push_str(&format!("noise_family = {}\n", meta.noise_family.as_str()));
    if let Some(df) = meta.noise_df {
        s.push_str(&format!("noise_df = {df}\n"));
    }
    s.push_str(&format!("seed = {}\n", meta.seed));
    s.push_str(&format!("n = {}\n", meta.n));
    s.push_str(&format!("burn_in = {}\n", meta.burn_in));
    s
}

pub fn write_stream_meta(path: &Path, meta: &StreamMeta) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(render_stream_meta(meta).as_bytes())?;
    w.flush()?;
    Ok(())
}

struct KvFile {
    path: String,
    entries: Vec<(String, String)>,
}

impl KvFile {
    fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Config {
                path: self.path.clone(),
                reason: format!("missing key {key:?}"),
            })
    }

    fn get_opt(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.parse().map_err(|_| Error::Config {
            path: self.path.clone(),
            reason: format!("cannot parse key {key:?}"),
        })
    }

    fn matrix(&self, key: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let vals = self.floats(key)?;
        if vals.len() != rows * cols {
            return Err(Error::Config {
                path: self.path.clone(),
                reason: format!(
                    "key {key:?} expects {} values, got {}",
                    rows * cols,
                    vals.len()
                ),
            });
        }
        Ok(DMatrix::from_row_slice(rows, cols, &vals))
    }

    fn vector(&self, key: &str, len: usize) -> Result<DVector<f64>> {
        let vals = self.floats(key)?;
        if vals.len() != len {
            return Err(Error::Config {
                path: self.path.clone(),
                reason: format!("key {key:?} expects {len} values, got {}", vals.len()),
            });
        }
        Ok(DVector::from_vec(vals))
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        self.get(key)?
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Config {
                    path: self.path.clone(),
                    reason: format!("bad float {tok:?} under key {key:?}"),
                })
            })
            .collect()
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
fn read_kv(path: &Path) -> Result<KvFile> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            path: path.display().to_string(),
            reason: format!("expected key = value, got {line:?}"),
        })?;
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(KvFile {
        path: path.display().to_string(),
        entries,
    })
}

pub fn read_stream_meta(path: &Path) -> Result<StreamMeta> {
    let kv = read_kv(path)?;
    let kind = kv.get("kind")?.to_string();
    let k: usize = kv.parse("k")?;
    let p1: usize = kv.parse("p1")?;
    let spec = match kind.as_str() {
        "varx" => {
            let p2: usize = kv.parse("p2")?;
            let phi = (1..=p1)
                .map(|i| kv.matrix(&format!("phi_{i}"), k, k))
                .collect::<Result<Vec<_>>>()?;
            let psi = (1..=p2)
                .map(|j| kv.matrix(&format!("psi_{j}"), k, k))
                .collect::<Result<Vec<_>>>()?;
            ModelSpec::Varx(VarxSpec::new(
                phi,
                psi,
                kv.matrix("omega", k, k)?,
                kv.vector("mu_y", k)?,
                kv.vector("mu_v", k)?,
            )?)
        }
        "seasonal_varx" => {
            let p2s: usize = kv.parse("p2_seasonal")?;
            let period: usize = kv.parse("period")?;
            let phi = (1..=p1)
                .map(|i| kv.matrix(&format!("phi_{i}"), k, k))
                .collect::<Result<Vec<_>>>()?;
            let theta = (1..=p2s)
                .map(|i| kv.matrix(&format!("theta_{i}"), k, k))
                .collect::<Result<Vec<_>>>()?;
            ModelSpec::Seasonal(SeasonalVarxSpec::new(
                phi,
                theta,
                period,
                kv.matrix("omega", k, k)?,
                kv.vector("mu_y", k)?,
            )?)
        }
        other => {
            return Err(Error::Config {
                path: path.display().to_string(),
                reason: format!("unknown spec kind {other:?}"),
            })
        }
    };
    Ok(StreamMeta {
        spec,
        noise_family: NoiseFamily::parse(kv.get("noise_family")?)?,
        noise_df: kv.get_opt("noise_df").and_then(|s| s.parse().ok()),
        seed: kv.parse("seed")?,
        n: kv.parse("n")?,
        burn_in: kv.parse("burn_in")?,
    })
}
