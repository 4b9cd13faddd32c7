//! Repeated-split benchmark protocol, statistics and reports.
//!
//! Repetition `r` splits with seed `base_seed + r`; every method in that
//! repetition sees the same split. Repetitions run in parallel and are
//! assembled in index order, so all non-timing report fields are
//! independent of scheduling.

mod config;
mod stats;
mod synthetic;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{BenchmarkConfig, MethodBlock, MethodEntry, MetricMode, ResolvedMethod, SplitMode};
pub use stats::{
    box_stats, mean, quantile_sorted, sample_variance, students_t_test, summary, BoxStats, Summary, TTest,
};
pub use synthetic::{synthetic_dataset, SyntheticSpec};

use crate::dataset_io::{random_split, stratified_split, subset, PairedMultimodalDataset, SplitPlan};
use crate::error::{Result, XmsError};
use crate::methods::{fit_method, FitOptions, MethodKind, MethodParams};
use crate::preprocess::PcaSetting;
use crate::retrieval_eval::{evaluate_model, Direction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub map_runs: Vec<f64>,
    /// Summary of `map_runs`; absent when every repetition failed.
    pub summary: Option<Summary>,
    /// acc@K for the configured K, one value per successful repetition.
    pub acc_runs: Vec<f64>,
    pub acc_summary: Option<Summary>,
    /// Mean CMC curve over successful repetitions.
    pub cmc_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingCell {
    pub repetition: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: MethodKind,
    pub directions: BTreeMap<String, DirectionReport>,
    /// Repetition indices behind each entry of the run vectors.
    pub repetitions: Vec<usize>,
    pub fit_seconds: Vec<f64>,
    pub fit_seconds_mean: Option<f64>,
    pub fit_seconds_var: Option<f64>,
    /// Effective hyperparameters of the first successful fit.
    pub hyperparams: BTreeMap<String, f64>,
    pub missing: Vec<MissingCell>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub method_pair: [String; 2],
    /// `a2b`, `b2a`, or `mean` (per-repetition average of both directions).
    pub direction: String,
    pub metric: MetricMode,
    pub t_statistic: f64,
    pub p_value: f64,
    pub significant_at_005: bool,
    pub welch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub timestamp_unix: u64,
}

impl Environment {
    fn capture(threads: usize) -> Self {
        Environment {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads,
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: BenchmarkConfig,
    /// Keyed by method label, in config order under `method_order`.
    pub methods: BTreeMap<String, MethodReport>,
    pub method_order: Vec<String>,
    pub ttests: Vec<TTestResult>,
    /// Label → direction → box statistics of the configured metric.
    pub box_stats: BTreeMap<String, BTreeMap<String, BoxStats>>,
    pub environment: Environment,
    /// True when any (method, repetition) cell failed.
    pub incomplete: bool,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| XmsError::Numerical(format!("report encoding: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| XmsError::Config(format!("report: {e}")))
    }

    /// Table-style CSV: one row per method, `min,max,mean,var,std` for
    /// `a2b` then `b2a`, over the configured metric.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e| XmsError::io("<csv>", e);
        let stats = ["min", "max", "mean", "var", "std"];
        let mut header = vec!["method".to_string()];
        for d in Direction::BOTH {
            header.extend(stats.iter().map(|s| format!("{}_{s}", d.key())));
        }
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for label in &self.method_order {
            let m = &self.methods[label];
            let mut row = vec![csv_field(label)];
            for d in Direction::BOTH {
                let dr = &m.directions[d.key()];
                let s = match self.config.metric {
                    MetricMode::Map => dr.summary,
                    MetricMode::AccAtK => dr.acc_summary,
                };
                match s {
                    Some(s) => row.extend([s.min, s.max, s.mean, s.var, s.std].iter().map(f64::to_string)),
                    None => row.extend(std::iter::repeat_n(String::new(), 5)),
                }
            }
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-(repetition, method) measurements.
#[derive(Debug, Clone)]
struct Cell {
    map: [f64; 2],
    acc: [f64; 2],
    cmc: [Vec<f64>; 2],
    fit_seconds: f64,
    hyperparams: BTreeMap<String, f64>,
}

fn make_split(config: &BenchmarkConfig, data: &PairedMultimodalDataset, r: usize) -> Result<SplitPlan> {
    let seed = config.base_seed.wrapping_add(r as u64);
    match config.split {
        SplitMode::Random => random_split(data.len(), config.n_train, seed),
        SplitMode::Stratified => stratified_split(&data.labels, config.n_train, seed),
    }
}

fn split_data(
    data: &PairedMultimodalDataset,
    plan: &SplitPlan,
) -> Result<(PairedMultimodalDataset, PairedMultimodalDataset)> {
    Ok((subset(data, &plan.train_indices)?, subset(data, &plan.test_indices)?))
}

/// Fits and evaluates one method on one split.
fn run_cell(
    method: MethodKind,
    params: &MethodParams,
    pca: PcaSetting,
    config: &BenchmarkConfig,
    train: &PairedMultimodalDataset,
    test: &PairedMultimodalDataset,
) -> Result<Cell> {
    let options = FitOptions {
        pca,
        time_includes_pca: config.time_includes_pca,
        l2_normalize: config.l2_normalize,
    };
    let model = fit_method(method, train, params, options)?;
    let mut cell = Cell {
        map: [0.0; 2],
        acc: [0.0; 2],
        cmc: [Vec::new(), Vec::new()],
        fit_seconds: model.fit_seconds,
        hyperparams: model.hyperparams.clone(),
    };
    for (i, d) in Direction::BOTH.into_iter().enumerate() {
        let e = evaluate_model(&model, test, d, config.map_cutoff)?;
        cell.map[i] = e.map;
        cell.acc[i] = e.acc_at(config.acc_k).unwrap_or(f64::NAN);
        cell.cmc[i] = e.acc_at_k;
    }
    if cell.map.iter().chain(cell.acc.iter()).any(|v| !v.is_finite()) {
        return Err(XmsError::Numerical("non-finite retrieval score".into()));
    }
    Ok(cell)
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| XmsError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Loads the configured data and runs the protocol.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<ExperimentReport> {
    let data = config.load_data()?;
    run_benchmark_on(config, &data)
}

/// Runs the protocol on already-loaded data.
pub fn run_benchmark_on(config: &BenchmarkConfig, data: &PairedMultimodalDataset) -> Result<ExperimentReport> {
    let methods = config.validate(data.len())?;
    let splits: Vec<(PairedMultimodalDataset, PairedMultimodalDataset)> = (0..config.repetitions)
        .map(|r| make_split(config, data, r).and_then(|p| split_data(data, &p)))
        .collect::<Result<_>>()?;
    let mut results: Vec<Vec<Result<Cell>>> = with_pool(config.threads, || {
        splits
            .par_iter()
            .map(|(train, test)| {
                methods
                    .iter()
                    .map(|m| run_cell(m.kind, &m.params, m.pca, config, train, test))
                    .collect()
            })
            .collect()
    })?;

    // configuration mistakes surface as errors, not as missing cells
    for row in results.iter_mut() {
        for cell in row.iter_mut() {
            if matches!(cell, Err(e) if e.exit_code() == 2) {
                return Err(std::mem::replace(cell, Err(XmsError::Config(String::new()))).unwrap_err());
            }
        }
    }

    let mut reports = BTreeMap::new();
    let mut order = Vec::new();
    let mut incomplete = false;
    for (mi, m) in methods.iter().enumerate() {
        let report = assemble(m.kind, results.iter().map(|row| &row[mi]));
        incomplete |= !report.complete;
        for miss in &report.missing {
            log::warn!("{} repetition {} failed: {}", m.label, miss.repetition, miss.reason);
        }
        order.push(m.label.clone());
        reports.insert(m.label.clone(), report);
    }

    let mut report = ExperimentReport {
        config: config.clone(),
        methods: reports,
        method_order: order,
        ttests: Vec::new(),
        box_stats: BTreeMap::new(),
        environment: Environment::capture(config.threads.unwrap_or_else(rayon::current_num_threads)),
        incomplete,
    };
    report.box_stats = box_stats_for(&report);
    let baseline = match &config.baseline {
        Some(b) => Some(b.clone()),
        None => methods
            .iter()
            .any(|m| m.kind == MethodKind::Lcfs)
            .then(|| "lcfs".to_string()),
    };
    if let Some(b) = baseline {
        report.ttests = ttests_from_report(&report, &b, config.welch)?;
    }
    Ok(report)
}

fn assemble<'a>(kind: MethodKind, cells: impl Iterator<Item = &'a Result<Cell>>) -> MethodReport {
    let mut map = [Vec::new(), Vec::new()];
    let mut acc = [Vec::new(), Vec::new()];
    let mut cmc_sum: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut reps = Vec::new();
    let mut secs = Vec::new();
    let mut missing = Vec::new();
    let mut hyperparams = BTreeMap::new();
    for (r, cell) in cells.enumerate() {
        match cell {
            Ok(c) => {
                if reps.is_empty() {
                    hyperparams = c.hyperparams.clone();
                }
                reps.push(r);
                secs.push(c.fit_seconds);
                for i in 0..2 {
                    map[i].push(c.map[i]);
                    acc[i].push(c.acc[i]);
                    if cmc_sum[i].is_empty() {
                        cmc_sum[i] = vec![0.0; c.cmc[i].len()];
                    }
                    for (s, v) in cmc_sum[i].iter_mut().zip(&c.cmc[i]) {
                        *s += v;
                    }
                }
            }
            Err(e) => missing.push(MissingCell {
                repetition: r,
                reason: e.to_string(),
            }),
        }
    }
    let mut directions = BTreeMap::new();
    for (i, d) in Direction::BOTH.into_iter().enumerate() {
        let k = reps.len().max(1) as f64;
        directions.insert(
            d.key().to_string(),
            DirectionReport {
                summary: summary(&map[i]),
                acc_summary: summary(&acc[i]),
                map_runs: std::mem::take(&mut map[i]),
                acc_runs: std::mem::take(&mut acc[i]),
                cmc_mean: cmc_sum[i].iter().map(|s| s / k).collect(),
            },
        );
    }
    MethodReport {
        method: kind,
        directions,
        fit_seconds_mean: (!secs.is_empty()).then(|| mean(&secs)),
        fit_seconds_var: (!secs.is_empty()).then(|| sample_variance(&secs)),
        fit_seconds: secs,
        complete: missing.is_empty(),
        repetitions: reps,
        hyperparams,
        missing,
    }
}

fn metric_runs<'a>(report: &'a ExperimentReport, m: &'a MethodReport, d: Direction) -> &'a [f64] {
    let dr = &m.directions[d.key()];
    match report.config.metric {
        MetricMode::Map => &dr.map_runs,
        MetricMode::AccAtK => &dr.acc_runs,
    }
}

fn box_stats_for(report: &ExperimentReport) -> BTreeMap<String, BTreeMap<String, BoxStats>> {
    let mut out = BTreeMap::new();
    for (label, m) in &report.methods {
        let mut per = BTreeMap::new();
        for d in Direction::BOTH {
            if let Some(b) = box_stats(metric_runs(report, m, d)) {
                per.insert(d.key().to_string(), b);
            }
        }
        out.insert(label.clone(), per);
    }
    out
}

/// Per-repetition average of both directions.
fn direction_mean(report: &ExperimentReport, m: &MethodReport) -> Vec<f64> {
    let a = metric_runs(report, m, Direction::AToB);
    let b = metric_runs(report, m, Direction::BToA);
    a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect()
}

/// t-tests of every method against `baseline` (a label, or a method name
/// matching one entry) in both directions and on the direction average.
pub fn ttests_from_report(report: &ExperimentReport, baseline: &str, welch: bool) -> Result<Vec<TTestResult>> {
    let entries: Vec<(&str, MethodKind)> = report
        .method_order
        .iter()
        .map(|l| (l.as_str(), report.methods[l].method))
        .collect();
    let base_label = config::find_label(&entries, baseline)?;
    let base = &report.methods[&base_label];
    let mut out = Vec::new();
    for label in &report.method_order {
        if *label == base_label {
            continue;
        }
        let other = &report.methods[label];
        let mut cases: Vec<(String, Vec<f64>, Vec<f64>)> = Direction::BOTH
            .into_iter()
            .map(|d| {
                (
                    d.key().to_string(),
                    metric_runs(report, base, d).to_vec(),
                    metric_runs(report, other, d).to_vec(),
                )
            })
            .collect();
        cases.push((
            "mean".into(),
            direction_mean(report, base),
            direction_mean(report, other),
        ));
        for (direction, a, b) in cases {
            if a.len() < 2 || b.len() < 2 {
                log::warn!("skipping t-test {base_label} vs {label} ({direction}): too few runs");
                continue;
            }
            let t = students_t_test(&a, &b, welch)?;
            out.push(TTestResult {
                method_pair: [base_label.clone(), label.clone()],
                direction,
                metric: report.config.metric,
                t_statistic: t.t_statistic,
                p_value: t.p_value,
                significant_at_005: t.significant_at_005(),
                welch,
            });
        }
    }
    Ok(out)
}

/// Mean-MAP surfaces of a λ sweep; `a2b[i][j]` belongs to
/// `(lambda1[i], lambda2[j])`. Cells where every repetition failed are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSurface {
    pub method: MethodKind,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub repetitions: usize,
    pub a2b: Vec<Vec<Option<f64>>>,
    pub b2a: Vec<Vec<Option<f64>>>,
    pub missing: Vec<SweepMissing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMissing {
    pub lambda1: f64,
    pub lambda2: f64,
    pub repetition: usize,
    pub reason: String,
}

/// Runs the repeated protocol for every `(λ1, λ2)` cell with the other
/// parameters taken from the first config entry of `method` (defaults and
/// the global PCA setting when it is not listed).
pub fn lambda_sweep(
    config: &BenchmarkConfig,
    data: &PairedMultimodalDataset,
    method: MethodKind,
    lambda1: &[f64],
    lambda2: &[f64],
) -> Result<SweepSurface> {
    if !matches!(method, MethodKind::Lcfs | MethodKind::Jfssl) {
        return Err(XmsError::Config(format!(
            "lambda sweep supports LCFS and JFSSL, not {method}"
        )));
    }
    if lambda1.is_empty() || lambda2.is_empty() {
        return Err(XmsError::Config("empty lambda grid".into()));
    }
    if lambda1.iter().chain(lambda2).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(XmsError::Config("lambda grid values must be finite and >= 0".into()));
    }
    let methods = config.validate(data.len())?;
    let (base, pca) = methods
        .iter()
        .find(|m| m.kind == method)
        .map_or((MethodParams::default(), config.pca), |m| (m.params.clone(), m.pca));

    let splits: Vec<(PairedMultimodalDataset, PairedMultimodalDataset)> = (0..config.repetitions)
        .map(|r| make_split(config, data, r).and_then(|p| split_data(data, &p)))
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize, usize)> = (0..lambda1.len())
        .flat_map(|i| (0..lambda2.len()).flat_map(move |j| (0..config.repetitions).map(move |r| (i, j, r))))
        .collect();
    let cells: Vec<Result<[f64; 2]>> = with_pool(config.threads, || {
        tasks
            .par_iter()
            .map(|&(i, j, r)| {
                let params = MethodParams {
                    lambda1: Some(lambda1[i]),
                    lambda2: Some(lambda2[j]),
                    ..base.clone()
                };
                let (train, test) = &splits[r];
                run_cell(method, &params, pca, config, train, test).map(|c| c.map)
            })
            .collect()
    })?;

    let mut a2b = vec![vec![None; lambda2.len()]; lambda1.len()];
    let mut b2a = a2b.clone();
    let mut missing = Vec::new();
    for i in 0..lambda1.len() {
        for j in 0..lambda2.len() {
            let mut vals = [Vec::new(), Vec::new()];
            for r in 0..config.repetitions {
                let idx = (i * lambda2.len() + j) * config.repetitions + r;
                match &cells[idx] {
                    Ok(m) => {
                        vals[0].push(m[0]);
                        vals[1].push(m[1]);
                    }
                    Err(e) => missing.push(SweepMissing {
                        lambda1: lambda1[i],
                        lambda2: lambda2[j],
                        repetition: r,
                        reason: e.to_string(),
                    }),
                }
            }
            if !vals[0].is_empty() {
                a2b[i][j] = Some(mean(&vals[0]));
                b2a[i][j] = Some(mean(&vals[1]));
            }
        }
    }
    Ok(SweepSurface {
        method,
        lambda1: lambda1.to_vec(),
        lambda2: lambda2.to_vec(),
        repetitions: config.repetitions,
        a2b,
        b2a,
        missing,
    })
}

/// Wall-clock seconds of one fit (PCA excluded unless requested).
pub fn measure_fit_time(
    method: MethodKind,
    train: &PairedMultimodalDataset,
    params: &MethodParams,
    options: FitOptions,
) -> Result<f64> {
    Ok(fit_method(method, train, params, options)?.fit_seconds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(methods: &str, reps: usize) -> BenchmarkConfig {
        BenchmarkConfig::from_str_any(
            &format!("synthetic: {{n: 60, dim_a: 12, dim_b: 10, seed: 5}}\nn_train: 40\nrepetitions: {reps}\nmethods: {methods}\nthreads: 2"),
            false,
        )
        .unwrap()
    }

    fn strip_timing(mut r: ExperimentReport) -> ExperimentReport {
        r.environment.timestamp_unix = 0;
        for m in r.methods.values_mut() {
            m.fit_seconds.clear();
            m.fit_seconds_mean = None;
            m.fit_seconds_var = None;
        }
        r
    }

    #[test]
    fn single_repetition_summary_is_flat() {
        let r = run_benchmark(&small_config("[cca]", 1)).unwrap();
        let m = &r.methods["PCA+CCA"];
        for d in ["a2b", "b2a"] {
            let s = m.directions[d].summary.unwrap();
            assert_eq!(m.directions[d].map_runs.len(), 1);
            assert!(s.min == s.max && s.max == s.mean);
        }
        assert!(m.fit_seconds_mean.unwrap() > 0.0);
        assert!(!r.incomplete);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let mut cfg = small_config("[cca, gmlda, lcfs]", 3);
        let a = strip_timing(run_benchmark(&cfg).unwrap());
        cfg.threads = Some(1);
        let mut b = strip_timing(run_benchmark(&cfg).unwrap());
        b.config.threads = Some(2);
        b.environment.threads = a.environment.threads;
        assert_eq!(a, b);
        assert_eq!(a.ttests.len(), 2 * 3);
        let json = a.to_json().unwrap();
        assert_eq!(ExperimentReport::from_json(&json).unwrap(), a);
    }

    #[test]
    fn summaries_recompute_from_runs() {
        let r = run_benchmark(&small_config("[blm, cdfe]", 4)).unwrap();
        for m in r.methods.values() {
            for d in m.directions.values() {
                assert_eq!(summary(&d.map_runs), d.summary);
                assert_eq!(d.map_runs.len(), 4);
                let last = *d.cmc_mean.last().unwrap();
                assert!((last - 1.0).abs() < 1e-12);
            }
        }
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("method,a2b_min,a2b_max,a2b_mean,a2b_var,a2b_std,b2a_min"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn failing_cells_are_flagged() {
        // d above the rank bound fails every fit with a configuration error
        let cfg = small_config("[{method: cca, params: {dim: 500}}]", 2);
        assert_eq!(run_benchmark(&cfg).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn one_cell_sweep_matches_benchmark() {
        let cfg = small_config("[{method: lcfs, params: {lambda1: 0.01, lambda2: 0.1}}]", 2);
        let data = cfg.load_data().unwrap();
        let s = lambda_sweep(&cfg, &data, MethodKind::Lcfs, &[0.01], &[0.1]).unwrap();
        let r = run_benchmark_on(&cfg, &data).unwrap();
        let m = &r.methods["PCA+LCFS"];
        assert_eq!(s.a2b[0][0].unwrap(), m.directions["a2b"].summary.unwrap().mean);
        assert_eq!(s.b2a[0][0].unwrap(), m.directions["b2a"].summary.unwrap().mean);
        assert!(lambda_sweep(&cfg, &data, MethodKind::Cca, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn fit_time_is_positive() {
        let cfg = small_config("[cca]", 1);
        let data = cfg.load_data().unwrap();
        let t = measure_fit_time(MethodKind::Cca, &data, &MethodParams::default(), FitOptions::default()).unwrap();
        assert!(t > 0.0 && t.is_finite());
    }
}
