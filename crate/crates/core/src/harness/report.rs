//! Report layout under the output directory:
//!
//! ```text
//! run_manifest.json                    config, seed, versions, assets, file list
//! failures.csv                         theta,method,asset_id,error
//! summary_theta_<θ>.csv / .txt         one row per method
//! theta_<θ>/<method>.csv               asset_id,exceedance_rate,dq_stat,p_value,mean_var
//! theta_<θ>/<method>_fits.json         fitted parameters per asset
//! theta_<θ>/joint_qcnn.ckpt            the pooled network, when trained
//! theta_<θ>/forecasts/<method>/<asset>.csv   date,return,var,exceedance
//! ```
//!
//! Nothing in the report depends on wall-clock time or scheduling, so equal
//! configs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{aggregate, AssetScore, Experiment, Method, SummaryTable, ThetaResults};
use crate::conv::checkpoint;
use crate::error::{Error, Result};
use crate::rng::GENERATOR;

/// Directory-name form of a quantile level, e.g. `0.05`.
pub fn theta_label(theta: f64) -> String {
    format!("{theta}")
}

fn confidence_label(theta: f64) -> String {
    let s = format!("{:.6}", 100.0 * (1.0 - theta));
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[derive(Debug, Default)]
pub struct ReportFiles {
    root: PathBuf,
    /// Written files relative to the report root, in write order.
    pub files: Vec<PathBuf>,
}

impl ReportFiles {
    fn write(&mut self, rel: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }
}

fn csv_text<S: Serialize>(rows: impl IntoIterator<Item = S>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Domain(format!("csv encoding: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Domain(format!("csv encoding: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn json_text<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}

/// Summary rows as CSV.
pub fn summary_csv(table: &SummaryTable) -> String {
    let mut out = String::from(
        "method,assets,exceedance_mean,exceedance_median,exceedance_sd,dq_reject_0.01,dq_reject_0.05,mean_var\n",
    );
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method, r.assets, r.exceedance_mean, r.exceedance_median, r.exceedance_sd, r.reject_01, r.reject_05, r.mean_var
        );
    }
    out
}

/// Fixed-width table: exceedance mean/median/SD, DQ rejection rates at 1%
/// and 5%, and mean VaR.
pub fn summary_text(table: &SummaryTable) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}% VaR forecasts (theta = {})",
        confidence_label(table.theta),
        theta_label(table.theta)
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<12} {:>6} | {:>8} {:>8} {:>8} | {:>8} {:>8} | {:>8}",
        "", "", "Exceed.", "", "", "DQ rej.", "", "VaR"
    );
    let _ = writeln!(
        out,
        "{:<12} {:>6} | {:>8} {:>8} {:>8} | {:>8} {:>8} | {:>8}",
        "Method", "Assets", "Mean", "Median", "SD", "0.01", "0.05", "Mean"
    );
    let _ = writeln!(out, "{}", "-".repeat(86));
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{:<12} {:>6} | {:>8.4} {:>8.4} {:>8.4} | {:>8.4} {:>8.4} | {:>8.4}",
            r.method.label(),
            r.assets,
            r.exceedance_mean,
            r.exceedance_median,
            r.exceedance_sd,
            r.reject_01,
            r.reject_05,
            r.mean_var
        );
    }
    out
}

#[derive(Serialize)]
struct ForecastRow<'a> {
    date: String,
    #[serde(rename = "return")]
    ret: f64,
    var: f64,
    exceedance: u8,
    #[serde(skip)]
    _p: std::marker::PhantomData<&'a ()>,
}

#[derive(Serialize)]
struct FitRecord<'a> {
    asset_id: &'a str,
    fit: &'a super::FitSummary,
}

fn write_theta(files: &mut ReportFiles, res: &ThetaResults, methods: &[Method], forecasts: bool) -> Result<()> {
    let dir = PathBuf::from(format!("theta_{}", theta_label(res.theta)));
    for &m in methods {
        let runs: Vec<_> = res.runs.iter().filter(|r| r.forecast.method == m).collect();
        files.write(
            dir.join(format!("{}.csv", m.name())),
            if runs.is_empty() {
                "asset_id,exceedance_rate,dq_stat,p_value,mean_var\n".to_string()
            } else {
                csv_text(runs.iter().map(|r| AssetScore::from_run(r)))?
            },
        )?;
        let fits: Vec<FitRecord> = runs
            .iter()
            .map(|r| FitRecord {
                asset_id: &r.forecast.asset_id,
                fit: &r.fit,
            })
            .collect();
        files.write(dir.join(format!("{}_fits.json", m.name())), json_text(&fits))?;
        if forecasts {
            for r in &runs {
                let f = &r.forecast;
                let rows = f.dates.iter().zip(&f.returns).zip(&f.var).map(|((d, &y), &v)| ForecastRow {
                    date: d.to_string(),
                    ret: y,
                    var: v,
                    exceedance: u8::from(y < -v),
                    _p: std::marker::PhantomData,
                });
                files.write(
                    dir.join("forecasts").join(m.name()).join(format!("{}.csv", f.asset_id)),
                    csv_text(rows)?,
                )?;
            }
        }
    }
    if let Some(model) = &res.joint_model {
        files.write(dir.join("joint_qcnn.ckpt"), checkpoint::to_string(model))?;
    }
    let label = theta_label(res.theta);
    files.write(format!("summary_theta_{label}.csv"), summary_csv(&res.summary))?;
    files.write(format!("summary_theta_{label}.txt"), summary_text(&res.summary))?;
    Ok(())
}

#[derive(Serialize)]
struct RunManifest<'a> {
    package: &'static str,
    version: &'static str,
    generator: &'static str,
    seed: u64,
    config: super::ExperimentConfig,
    assets: &'a [String],
    skipped: &'a [super::Skipped],
    failures: usize,
    files: Vec<String>,
}

/// Writes every report file of an experiment into `dir`.
pub fn write_report(exp: &Experiment, dir: impl AsRef<Path>) -> Result<ReportFiles> {
    let mut files = ReportFiles {
        root: dir.as_ref().to_path_buf(),
        files: Vec::new(),
    };
    let methods = &exp.config.experiment.methods;
    for res in &exp.results {
        write_theta(&mut files, res, methods, exp.config.experiment.forecasts)?;
    }
    let failures: Vec<_> = exp.results.iter().flat_map(|r| &r.failures).collect();
    files.write(
        "failures.csv",
        if failures.is_empty() {
            "theta,method,asset_id,error\n".to_string()
        } else {
            csv_text(&failures)?
        },
    )?;

    // the report's own location is not part of its content
    let mut config = exp.config.clone();
    config.experiment.output = PathBuf::from(".");
    let mut listed: Vec<String> = files.files.iter().map(|p| p.to_string_lossy().replace('\\', "/")).collect();
    listed.sort();
    let manifest = RunManifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        generator: GENERATOR,
        seed: exp.config.experiment.seed,
        config,
        assets: &exp.assets,
        skipped: &exp.skipped,
        failures: failures.len(),
        files: listed,
    };
    files.write("run_manifest.json", json_text(&manifest))?;
    Ok(files)
}

/// Reads a per-method score file.
pub fn read_method_csv(path: impl AsRef<Path>) -> Result<Vec<AssetScore>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    })?;
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Recomputes and rewrites the summary files of an existing report from its
/// per-method score files. Returns the tables in ascending order of θ.
pub fn rebuild_summaries(dir: impl AsRef<Path>) -> Result<Vec<SummaryTable>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut thetas: Vec<(f64, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(label) = name.strip_prefix("theta_") {
            if entry.path().is_dir() {
                let theta: f64 = label
                    .parse()
                    .map_err(|_| Error::Config(format!("{}: not a theta directory", entry.path().display())))?;
                thetas.push((theta, entry.path()));
            }
        }
    }
    if thetas.is_empty() {
        return Err(Error::InsufficientData(format!("{}: no theta_* directories", dir.display())));
    }
    thetas.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut files = ReportFiles {
        root: dir.to_path_buf(),
        files: Vec::new(),
    };
    let mut tables = Vec::new();
    for (theta, path) in thetas {
        let mut methods = Vec::new();
        let mut scores = Vec::new();
        for m in Method::ALL {
            let file = path.join(format!("{}.csv", m.name()));
            if file.is_file() {
                methods.push(m);
                scores.extend(read_method_csv(&file)?.into_iter().map(|s| (m, s)));
            }
        }
        let table = aggregate(theta, &methods, &scores);
        let label = theta_label(theta);
        files.write(format!("summary_theta_{label}.csv"), summary_csv(&table))?;
        files.write(format!("summary_theta_{label}.txt"), summary_text(&table))?;
        tables.push(table);
    }
    Ok(tables)
}
