//! Draw files, summary tables and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrices;
use crate::error::{ModelError, Result};
use crate::model::{CorrelationVariant, ModelSpec};
use crate::posterior::{self, CorrelationSummary, CurveSummary, InclusionSummary};
use crate::sampler::Schedule;
use crate::samples::{ChainReport, ChainSamples, Layout};

pub const DRAWS: &str = "draws.csv";
pub const CURVES: &str = "curves.csv";
pub const INCLUSION: &str = "inclusion.csv";
pub const CORRELATIONS: &str = "correlations.csv";
pub const PRECISION: &str = "precision.csv";
pub const COCLUSTERING: &str = "coclustering.csv";
pub const MANIFEST: &str = "manifest.json";

/// 17 significant digits, enough to read back the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), fmt_f64)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ModelError + '_ {
    move |e| ModelError::Data(format!("{}: {e}", path.display()))
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn write_draws(path: &Path, samples: &ChainSamples) -> Result<()> {
    let mut header = vec!["sweep".to_string()];
    header.extend(samples.layout.names());
    let rows = samples.draws.iter().zip(&samples.sweeps).map(|(d, s)| {
        let mut row = vec![s.to_string()];
        row.extend(d.flatten().into_iter().map(fmt_f64));
        row
    });
    write_rows(path, &header, rows)
}

/// Read a draw file written by [`write_draws`]; the header must match the
/// layout exactly.
pub fn read_draws(path: &Path, layout: &Layout) -> Result<ChainSamples> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(String::from).collect();
    let mut expected = vec!["sweep".to_string()];
    expected.extend(layout.names());
    if header != expected {
        let at = header.iter().zip(&expected).position(|(a, b)| a != b).unwrap_or(header.len().min(expected.len()));
        return Err(ModelError::Data(format!(
            "{}: header does not match the model (first difference at column {}: `{}` vs `{}`)",
            path.display(),
            at + 1,
            header.get(at).map_or("", String::as_str),
            expected.get(at).map_or("", String::as_str),
        )));
    }
    let mut sweeps = Vec::new();
    let mut draws = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = |c: usize| ModelError::Data(format!("{}: row {}, column `{}` is not numeric", path.display(), i + 2, expected[c]));
        sweeps.push(rec[0].parse::<usize>().map_err(|_| bad(0))?);
        let vals = rec
            .iter()
            .enumerate()
            .skip(1)
            .map(|(c, v)| v.parse::<f64>().map_err(|_| bad(c)))
            .collect::<Result<Vec<_>>>()?;
        draws.push(crate::samples::Draw::unflatten(layout, &vals)?);
    }
    Ok(ChainSamples {
        layout: layout.clone(),
        sweeps,
        draws,
        report: None,
    })
}

/// All tables derived from one set of draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summaries {
    pub curves: Vec<CurveSummary>,
    pub inclusion: InclusionSummary,
    pub correlations: Vec<CorrelationSummary>,
    /// Grouped correlations only: pairwise probability that two
    /// correlations share a cluster.
    pub coclustering: Option<DMatrix<f64>>,
    pub precision: Vec<(f64, DMatrix<f64>)>,
}

pub fn summarize(
    samples: &ChainSamples,
    designs: &DesignMatrices,
    spec: &ModelSpec,
    thresholds: &[f64],
    grid_points: usize,
) -> Result<Summaries> {
    let mut curves = Vec::new();
    for j in 0..designs.p {
        for t in 0..designs.mean_terms.len() {
            let grid = posterior::default_grid(designs, t, grid_points);
            curves.push(posterior::curve_summary(samples, designs, j, t, &grid)?);
        }
    }
    let coclustering = matches!(spec.correlation.variant, CorrelationVariant::GroupedCorrelations { .. })
        .then(|| posterior::correlation_coclustering(samples));
    Ok(Summaries {
        curves,
        inclusion: posterior::inclusion_probabilities(samples, designs),
        correlations: posterior::correlation_summary(samples, &spec.correlation.variant),
        coclustering,
        precision: thresholds
            .iter()
            .map(|&a| (a, posterior::precision_threshold_probs(samples, a)))
            .collect(),
    })
}

/// Column names used to label tables.
pub struct Names<'a> {
    pub columns: &'a [String],
    pub designs: &'a DesignMatrices,
    pub spec: &'a ModelSpec,
}

impl Names<'_> {
    fn response(&self, j: usize) -> &str {
        &self.columns[self.spec.responses[j]]
    }

    fn mean_term(&self, t: usize) -> &str {
        &self.columns[self.designs.mean_terms[t].spec.column]
    }

    fn variance_term(&self, t: usize) -> &str {
        &self.columns[self.designs.variance_terms[t].spec.column]
    }
}

pub fn write_summaries(dir: &Path, s: &Summaries, names: &Names<'_>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |file: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let path = dir.join(file);
        write_rows(&path, &strings(header), rows)?;
        written.push(path);
        Ok(())
    };

    let mut rows = Vec::new();
    for c in &s.curves {
        for g in 0..c.grid.len() {
            rows.push(vec![
                names.response(c.response).to_string(),
                names.mean_term(c.term).to_string(),
                fmt_f64(c.grid[g]),
                fmt_f64(c.median[g]),
                fmt_f64(c.lower[g]),
                fmt_f64(c.upper[g]),
            ]);
        }
    }
    put(CURVES, &["response", "term", "x", "median", "q05", "q95"], rows)?;

    let mut rows = Vec::new();
    let inc = &s.inclusion;
    for j in 0..names.designs.p {
        for (kind, terms, coef, per_term) in [
            ("mean", &names.designs.mean_terms, &inc.mean_coef[j], &inc.mean_term[j]),
            ("variance", &names.designs.variance_terms, &inc.variance_coef[j], &inc.variance_term[j]),
        ] {
            for (t, layout) in terms.iter().enumerate() {
                let term = if kind == "mean" { names.mean_term(t) } else { names.variance_term(t) };
                rows.push(vec![
                    names.response(j).into(),
                    kind.into(),
                    term.into(),
                    "any".into(),
                    fmt_f64(per_term[t]),
                ]);
                for (b, c) in layout.columns().enumerate() {
                    rows.push(vec![
                        names.response(j).into(),
                        kind.into(),
                        term.into(),
                        (b + 1).to_string(),
                        fmt_f64(coef[c]),
                    ]);
                }
            }
        }
    }
    put(INCLUSION, &["response", "predictor", "term", "basis", "probability"], rows)?;

    let rows = s
        .correlations
        .iter()
        .map(|c| {
            vec![
                names.response(c.k).into(),
                names.response(c.l).into(),
                fmt_f64(c.mean),
                fmt_f64(c.sd),
                fmt_f64(c.q05),
                fmt_f64(c.q95),
                fmt_opt(c.co_cluster),
            ]
        })
        .collect();
    put(CORRELATIONS, &["response_k", "response_l", "mean", "sd", "q05", "q95", "co_cluster"], rows)?;

    let p = names.designs.p;
    let mut rows = Vec::new();
    for (a, m) in &s.precision {
        for k in 0..p {
            for l in 0..p {
                rows.push(vec![
                    fmt_f64(*a),
                    names.response(k).into(),
                    names.response(l).into(),
                    fmt_f64(m[(k, l)]),
                ]);
            }
        }
    }
    put(PRECISION, &["threshold", "response_k", "response_l", "probability"], rows)?;

    if let Some(m) = &s.coclustering {
        let pair_names: Vec<String> = crate::correlation::pairs(p)
            .into_iter()
            .map(|(k, l)| format!("{}:{}", names.response(k), names.response(l)))
            .collect();
        let mut header = vec!["pair".to_string()];
        header.extend(pair_names.iter().cloned());
        let rows = (0..m.nrows())
            .map(|a| {
                let mut r = vec![pair_names[a].clone()];
                r.extend((0..m.ncols()).map(|b| fmt_f64(m[(a, b)])));
                r
            })
            .collect::<Vec<_>>();
        let path = dir.join(COCLUSTERING);
        write_rows(&path, &header, rows)?;
        written.push(path);
    }
    Ok(written)
}

/// Everything needed to audit or rerun a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest<C> {
    pub version: String,
    pub seed: u64,
    pub schedule: Schedule,
    pub retained_draws: usize,
    pub data_rows: usize,
    pub report: Option<ChainReport>,
    /// Curves are centred over the observed rows; the intercept carries the level.
    pub curves_centered: bool,
    pub config: C,
}

pub fn to_json<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|t| t + "\n")
        .map_err(|e| ModelError::Data(e.to_string()))
}

pub fn write_manifest<C: Serialize>(dir: &Path, manifest: &Manifest<C>) -> Result<PathBuf> {
    let path = dir.join(MANIFEST);
    fs::write(&path, to_json(manifest)?).map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_manifest<C: for<'de> Deserialize<'de>>(path: &Path) -> Result<Manifest<C>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ModelError::Data(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}
