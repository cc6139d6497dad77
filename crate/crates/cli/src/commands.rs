use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nalgebra::Vector3;
use rapsnav::eval::{
    compute_errors, empirical_cdf, format_table, nees, paired_t_test, record_errors, summarize, ErrorSeries, Summary,
};
use rapsnav::filter::{run_filter, Dataset, EpochRecord};
use rapsnav::io::{
    assemble_epochs, read_gnss_csv, read_imu_csv, read_trajectory_csv, read_truth_csv, write_diagnostics_jsonl,
    write_gnss_csv, write_imu_csv, write_trajectory_csv, write_truth_csv, Receiver, TrajectoryRow,
};
use rapsnav::registry::{Method, Registry};
use rapsnav::rng::split_seed;
use rapsnav::sim::{simulate, TruthRecord};
use rapsnav::NavError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetFiles, RunConfig};

/// Decimal places of every reported statistic.
pub const DIGITS: usize = 4;

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(NavError::from).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).map_err(NavError::from).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(NavError::from).with_context(|| format!("creating directory {}", dir.display()))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().context("starting worker threads")
}

/// One written file and its number of data rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub rows: usize,
}

/// One `path<TAB>rows` line per file.
pub fn manifest_text(entries: &[ManifestEntry]) -> String {
    entries.iter().map(|e| format!("{}\t{}\n", e.path.display(), e.rows)).collect()
}

#[derive(Serialize)]
struct ScenarioFile<'a> {
    seed: u64,
    preset: &'a str,
    scenario: &'a rapsnav::sim::ScenarioConfig,
}

/// Writes `imu.csv`, `rover.csv`, `base.csv`, `truth.csv`, `dataset.json`
/// and `scenario.json` into the output directory.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<ManifestEntry>> {
    let dir = cfg.output_dir()?;
    let sc = simulate(&cfg.scenario, cfg.seed)?;
    make_dir(dir)?;
    let mut out = Vec::new();
    let mut emit = |name: &str, rows: usize, write: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
        let path = dir.join(name);
        let mut w = create(&path)?;
        write(&mut w)?;
        w.flush().map_err(NavError::from)?;
        out.push(ManifestEntry { path, rows });
        Ok(())
    };
    let epochs = &sc.dataset.epochs;
    emit("imu.csv", sc.dataset.imu.len(), &|w| Ok(write_imu_csv(w, &sc.dataset.imu)?))?;
    emit("rover.csv", epochs.iter().map(|e| e.rover.len()).sum(), &|w| {
        Ok(write_gnss_csv(w, epochs, Receiver::Rover)?)
    })?;
    emit("base.csv", epochs.iter().map(|e| e.base.len()).sum(), &|w| Ok(write_gnss_csv(w, epochs, Receiver::Base)?))?;
    emit("truth.csv", sc.truth.len(), &|w| Ok(write_truth_csv(w, &sc.truth)?))?;
    let files = DatasetFiles {
        imu: "imu.csv".into(),
        rover: "rover.csv".into(),
        base: "base.csv".into(),
        truth: Some("truth.csv".into()),
        base_position: cfg.scenario.base_position().into(),
    };
    emit("dataset.json", 1, &|w| Ok(serde_json::to_writer_pretty(w, &files)?))?;
    let meta = ScenarioFile { seed: cfg.seed, preset: &cfg.preset, scenario: &cfg.scenario };
    emit("scenario.json", 1, &|w| Ok(serde_json::to_writer_pretty(w, &meta)?))?;
    Ok(out)
}

/// Sensor data and, when known, the truth.
pub struct Inputs {
    pub dataset: Dataset,
    pub truth: Option<Vec<TruthRecord>>,
}

pub fn load_inputs(cfg: &RunConfig, seed: u64) -> Result<Inputs> {
    match &cfg.dataset {
        Some(files) => {
            files.check_exist()?;
            let imu = read_imu_csv(open(&files.imu)?).with_context(|| format!("reading {}", files.imu.display()))?;
            let rover =
                read_gnss_csv(open(&files.rover)?).with_context(|| format!("reading {}", files.rover.display()))?;
            let base =
                read_gnss_csv(open(&files.base)?).with_context(|| format!("reading {}", files.base.display()))?;
            let epochs = assemble_epochs(rover, base, Vector3::from(files.base_position))?;
            let truth = match &files.truth {
                Some(p) => Some(read_truth_csv(open(p)?).with_context(|| format!("reading {}", p.display()))?),
                None => None,
            };
            Ok(Inputs { dataset: Dataset { imu, epochs }, truth })
        }
        None => {
            let sc = simulate(&cfg.scenario, seed)?;
            Ok(Inputs { dataset: sc.dataset, truth: Some(sc.truth) })
        }
    }
}

/// Runs one method; a filter that never started is reported as bad input.
fn estimate(method: &Method, data: &Dataset, cfg: &RunConfig) -> Result<Vec<EpochRecord>> {
    let recs = run_filter(method, data, &cfg.filter).with_context(|| format!("running {}", method.name))?;
    if recs.is_empty() {
        return Err(NavError::invalid(format!(
            "{} produced no epochs: the filter never initialized (dataset too short or too few satellites)",
            method.name
        ))
        .into());
    }
    Ok(recs)
}

fn run_methods(cfg: &RunConfig, data: &Dataset) -> Result<Vec<Vec<EpochRecord>>> {
    let reg = Registry::default();
    cfg.methods
        .iter()
        .map(|name| {
            let method = reg.build(name, &cfg.estimator)?;
            estimate(&method, data, cfg)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeesRow {
    pub method: String,
    pub epochs: usize,
    pub in_band_fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub summary: Vec<Summary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub nees: Vec<NeesRow>,
    #[serde(skip)]
    pub files: Vec<ManifestEntry>,
}

/// Runs every method on one dataset and writes `trajectory.csv` plus one
/// `<method>.diagnostics.jsonl` per method.
pub fn cmd_estimate(cfg: &RunConfig, with_nees: bool) -> Result<EstimateReport> {
    let dir = cfg.output_dir()?;
    if with_nees && cfg.dataset.as_ref().is_some_and(|d| d.truth.is_none()) {
        return Err(NavError::invalid("--nees needs a truth file in the dataset").into());
    }
    let inputs = load_inputs(cfg, cfg.seed)?;
    let reg = Registry::default();
    let runs: Vec<Vec<EpochRecord>> = pool(cfg.jobs)?.install(|| {
        cfg.methods
            .par_iter()
            .map(|name| {
                let method = reg.build(name, &cfg.estimator)?;
                estimate(&method, &inputs.dataset, cfg)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    make_dir(dir)?;
    let mut report = EstimateReport::default();
    let all: Vec<EpochRecord> = runs.iter().flatten().cloned().collect();
    let path = dir.join("trajectory.csv");
    let mut w = create(&path)?;
    write_trajectory_csv(&mut w, &all)?;
    w.flush().map_err(NavError::from)?;
    report.files.push(ManifestEntry { path, rows: all.len() });
    for recs in &runs {
        let Some(first) = recs.first() else { continue };
        let path = dir.join(format!("{}.diagnostics.jsonl", first.method));
        if report.files.iter().any(|f| f.path == path) {
            continue;
        }
        let mut w = create(&path)?;
        write_diagnostics_jsonl(&mut w, recs)?;
        w.flush().map_err(NavError::from)?;
        report.files.push(ManifestEntry { path, rows: recs.len() });
    }

    if let Some(truth) = &inputs.truth {
        for (name, recs) in cfg.methods.iter().zip(&runs) {
            let mut series = record_errors(recs, truth);
            series.method = name.clone();
            report.summary.push(summarize(&series, &cfg.thresholds)?.rounded(DIGITS as i32));
            if with_nees {
                let n = nees(recs, truth).with_context(|| format!("NEES of {name}"))?;
                report.nees.push(NeesRow {
                    method: name.clone(),
                    epochs: n.values.len(),
                    in_band_fraction: round(n.in_band_fraction),
                });
            }
        }
    }
    Ok(report)
}

impl EstimateReport {
    pub fn to_text(&self) -> String {
        let mut s = format_table(&self.summary, DIGITS);
        if !self.nees.is_empty() {
            s.push('\n');
            for n in &self.nees {
                let _ = writeln!(
                    s,
                    "NEES in 95% band  {:<14} {:.prec$} of {} epochs",
                    n.method,
                    n.in_band_fraction,
                    n.epochs,
                    prec = DIGITS
                );
            }
        }
        s
    }
}

fn round(x: f64) -> f64 {
    let s = 10f64.powi(DIGITS as i32);
    (x * s).round() / s
}

/// Statistics of one Monte Carlo run, one entry per method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub summary: Vec<Summary>,
}

/// One-sided paired t-test on per-run horizontal RMS: `p` is the
/// probability of a mean difference at least this negative under the null.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub a: String,
    pub b: String,
    pub mean_difference: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub seed: u64,
    pub methods: Vec<String>,
    /// All runs pooled per method.
    pub pooled: Vec<Summary>,
    pub runs: Vec<RunSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub paired: Vec<PairedRow>,
}

/// Seed of Monte Carlo run `i`.
pub fn run_seed(master: u64, i: usize) -> u64 {
    split_seed(master, i as u64)
}

/// Runs every method on `runs` independent scenarios (or once on a
/// recorded dataset) and pools the error statistics.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareReport> {
    if cfg.dataset.is_some() && cfg.runs != 1 {
        return Err(NavError::invalid("Monte Carlo runs need the simulator, not a recorded dataset").into());
    }
    if cfg.dataset.as_ref().is_some_and(|d| d.truth.is_none()) {
        return Err(NavError::invalid("compare needs a truth file in the dataset").into());
    }
    let per_run: Vec<(u64, Vec<ErrorSeries>)> = pool(cfg.jobs)?.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|i| {
                let seed = if cfg.dataset.is_some() { cfg.seed } else { run_seed(cfg.seed, i) };
                let inputs = load_inputs(cfg, seed)?;
                let truth = inputs.truth.as_deref().unwrap_or_default();
                let series = run_methods(cfg, &inputs.dataset)
                    .with_context(|| format!("run {i} (seed {seed})"))?
                    .iter()
                    .zip(&cfg.methods)
                    .map(|(recs, name)| {
                        let mut s = record_errors(recs, truth);
                        s.method = name.clone();
                        s
                    })
                    .collect();
                Ok((seed, series))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let digits = DIGITS as i32;
    let mut runs = Vec::with_capacity(per_run.len());
    for (i, (seed, series)) in per_run.iter().enumerate() {
        let summary =
            series.iter().map(|s| Ok(summarize(s, &cfg.thresholds)?.rounded(digits))).collect::<Result<Vec<_>>>()?;
        runs.push(RunSummary { run: i, seed: *seed, summary });
    }
    let mut pooled = Vec::with_capacity(cfg.methods.len());
    for (k, name) in cfg.methods.iter().enumerate() {
        let mut all = ErrorSeries { method: name.clone(), ..Default::default() };
        for (_, series) in &per_run {
            let s = &series[k];
            all.t.extend(&s.t);
            all.horizontal.extend(&s.horizontal);
            all.vertical.extend(&s.vertical);
            all.three_d.extend(&s.three_d);
            all.unmatched += s.unmatched;
        }
        pooled.push(summarize(&all, &cfg.thresholds)?.rounded(digits));
    }

    let mut paired = Vec::new();
    if runs.len() >= 2 {
        for a in 0..cfg.methods.len() {
            for b in 0..cfg.methods.len() {
                if a == b {
                    continue;
                }
                let rms = |k: usize| runs.iter().map(|r| r.summary[k].horizontal.rms).collect::<Vec<f64>>();
                let (xa, xb) = (rms(a), rms(b));
                let (t, p) = paired_t_test(&xa, &xb)?;
                let mean = xa.iter().zip(&xb).map(|(x, y)| x - y).sum::<f64>() / xa.len() as f64;
                paired.push(PairedRow {
                    a: cfg.methods[a].clone(),
                    b: cfg.methods[b].clone(),
                    mean_difference: round(mean),
                    t: round(t),
                    p: round(p),
                });
            }
        }
    }
    Ok(CompareReport { seed: cfg.seed, methods: cfg.methods.clone(), pooled, runs, paired })
}

impl CompareReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("{} run(s), master seed {}\n\n", self.runs.len(), self.seed);
        s.push_str(&format_table(&self.pooled, DIGITS));
        if !self.paired.is_empty() {
            s.push_str("\nPaired t-test on per-run horizontal RMS (H1: A < B)\n");
            for p in &self.paired {
                let _ = writeln!(
                    s,
                    "{:<14} vs {:<14} mean diff {:>9.prec$}  t {:>9.prec$}  p {:.prec$}",
                    p.a,
                    p.b,
                    p.mean_difference,
                    p.t,
                    p.p,
                    prec = DIGITS
                );
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Writes `compare.txt` and `compare.json`.
pub fn write_compare(dir: &Path, report: &CompareReport) -> Result<Vec<ManifestEntry>> {
    make_dir(dir)?;
    let mut out = Vec::new();
    for (name, text) in [("compare.txt", report.to_text()), ("compare.json", report.to_json()?)] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(NavError::from).with_context(|| format!("writing {}", path.display()))?;
        out.push(ManifestEntry { path, rows: report.pooled.len() });
    }
    Ok(out)
}

#[derive(Serialize)]
struct ErrorRow<'a> {
    t: f64,
    method: &'a str,
    horizontal: f64,
    vertical: f64,
    three_d: f64,
}

#[derive(Serialize)]
struct CdfRow<'a> {
    method: &'a str,
    horizontal: f64,
    probability: f64,
}

#[derive(Serialize)]
struct SelectionRow<'a> {
    t: f64,
    method: &'a str,
    m_used: usize,
    m_total: usize,
    rate: Option<f64>,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<usize> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut n = 0;
    for row in rows {
        w.serialize(row).map_err(NavError::from)?;
        n += 1;
    }
    w.flush().map_err(NavError::from)?;
    Ok(n)
}

/// Plot-ready CSVs from trajectory files: `selection_rate.csv` always,
/// `error_vs_time.csv` and `cdf.csv` when a truth file is given.
pub fn cmd_report(trajectories: &[PathBuf], truth: Option<&Path>, dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut by_method: Vec<(String, Vec<TrajectoryRow>)> = Vec::new();
    let mut index = BTreeMap::new();
    for path in trajectories {
        for row in read_trajectory_csv(open(path)?).with_context(|| format!("reading {}", path.display()))? {
            let k = *index.entry(row.method.clone()).or_insert_with(|| {
                by_method.push((row.method.clone(), Vec::new()));
                by_method.len() - 1
            });
            by_method[k].1.push(row);
        }
    }
    if by_method.is_empty() {
        return Err(NavError::invalid("no trajectory rows to report").into());
    }
    let truth = match truth {
        Some(p) => Some(read_truth_csv(open(p)?).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };

    make_dir(dir)?;
    let mut out = Vec::new();
    let path = dir.join("selection_rate.csv");
    let rows = by_method.iter().flat_map(|(m, rows)| {
        rows.iter().map(move |r| SelectionRow {
            t: r.t,
            method: m,
            m_used: r.m_used,
            m_total: r.m_total,
            rate: (r.m_total > 0).then(|| r.m_used as f64 / r.m_total as f64),
        })
    });
    let n = write_csv(&path, rows)?;
    out.push(ManifestEntry { path, rows: n });

    if let Some(truth) = &truth {
        let series: Vec<ErrorSeries> = by_method
            .iter()
            .map(|(m, rows)| {
                let est: Vec<(f64, Vector3<f64>)> = rows.iter().map(|r| (r.t, r.position())).collect();
                compute_errors(m, &est, truth)
            })
            .collect();
        for s in &series {
            if s.unmatched > 0 {
                eprintln!("warning: {} epochs of {} have no truth and were dropped", s.unmatched, s.method);
            }
        }
        let path = dir.join("error_vs_time.csv");
        let rows = series.iter().flat_map(|s| {
            (0..s.len()).map(move |i| ErrorRow {
                t: s.t[i],
                method: &s.method,
                horizontal: s.horizontal[i],
                vertical: s.vertical[i],
                three_d: s.three_d[i],
            })
        });
        let n = write_csv(&path, rows)?;
        out.push(ManifestEntry { path, rows: n });

        let path = dir.join("cdf.csv");
        let rows = series.iter().flat_map(|s| {
            empirical_cdf(&s.horizontal).into_iter().map(move |(h, p)| CdfRow {
                method: &s.method,
                horizontal: h,
                probability: p,
            })
        });
        let n = write_csv(&path, rows)?;
        out.push(ManifestEntry { path, rows: n });
    }
    Ok(out)
}
