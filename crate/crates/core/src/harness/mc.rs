use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{abs_dev, dose_units, rpsel};
use crate::design::{drive, DesignConfig, IterationRecord, Mode, ResponseOracle, Trial};
use crate::error::HarnessError;
use crate::scenarios::ScenarioSpec;
use crate::Dose;

const ORACLE_STREAM: u64 = 1 << 62;
const METRIC_STREAM: u64 = ORACLE_STREAM + 1;

/// Draws responses from a scenario and remembers which stratum each patient
/// came from. When the design does not choose the stratum the patient's
/// stratum is drawn from the scenario's population weights.
pub struct ScenarioOracle<'a, R> {
    spec: &'a ScenarioSpec,
    rng: R,
    strata: Vec<usize>,
}

impl<'a, R: Rng> ScenarioOracle<'a, R> {
    pub fn new(spec: &'a ScenarioSpec, rng: R) -> Self {
        Self {
            spec,
            rng,
            strata: Vec::new(),
        }
    }

    /// Stratum of each patient, in enrollment order.
    pub fn strata(&self) -> &[usize] {
        &self.strata
    }
}

impl<R: Rng> ResponseOracle for ScenarioOracle<'_, R> {
    fn respond(&mut self, dose: &Dose, stratum: Option<usize>) -> f64 {
        let k = stratum.unwrap_or_else(|| self.spec.sample_stratum(&mut self.rng));
        self.strata.push(k);
        self.spec
            .sample_outcome(dose.coords(), k, &mut self.rng)
            .expect("stratum validated against the scenario")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    /// Label written to every record, e.g. a preset name.
    pub label: String,
    pub replicates: usize,
    pub seed: u64,
    /// Posterior draws per RPSEL evaluation.
    pub metric_draws: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            label: "custom".into(),
            replicates: 200,
            seed: 1,
            metric_draws: 2000,
        }
    }
}

/// One row of `metrics.csv`: a replicate's state in one scenario stratum
/// after one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub scenario: String,
    pub design: String,
    pub replicate: usize,
    pub iteration: usize,
    pub stratum: usize,
    pub covariates: String,
    pub n: usize,
    /// Patients from this stratum enrolled so far.
    pub stratum_n: usize,
    /// Recommended dose, coordinates separated by spaces.
    pub d_hat: String,
    /// Empty when the stratum has no optimum.
    pub dose_units: Option<f64>,
    pub rpsel: f64,
    pub abs_dev: f64,
    pub stopped: bool,
    pub unique_doses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub stratum: usize,
    pub covariates: String,
    pub mean_n: f64,
    pub mean_stratum_n: f64,
    pub mean_dose_units: Option<f64>,
    pub mean_rpsel: f64,
    pub mean_abs_dev: f64,
    pub mean_unique_doses: f64,
    pub stopped_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub expected_n: f64,
    pub expected_unique_doses: f64,
    /// Mean enrollment per scenario stratum.
    pub expected_stratum_n: Vec<f64>,
    /// Fraction of replicates that ended before exhausting the budget.
    pub stopped_early_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub design: String,
    pub replicates: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub failures: Vec<ReplicateFailure>,
    pub iterations: Vec<IterationSummary>,
    #[serde(rename = "final")]
    pub final_: FinalSummary,
}

impl Summary {
    /// Per-iteration summary for one stratum, in iteration order.
    pub fn stratum(&self, stratum: usize) -> impl Iterator<Item = &IterationSummary> {
        self.iterations.iter().filter(move |s| s.stratum == stratum)
    }

    pub fn last(&self, stratum: usize) -> Option<&IterationSummary> {
        self.stratum(stratum).last()
    }
}

/// Everything needed to rerun a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub version: String,
    pub scenario: ScenarioSpec,
    pub design: DesignConfig,
    pub options: McOptions,
    /// Trial seed of each replicate.
    pub seeds: Vec<u64>,
}

/// Outcome of one replicate that ran to completion.
#[derive(Debug, Clone)]
pub struct ReplicateRun {
    pub replicate: usize,
    pub records: Vec<MetricRecord>,
    /// Grid maximum of the acquisition for each trial stratum, by iteration.
    pub max_acquisition: Vec<Vec<f64>>,
    pub final_n: usize,
    pub unique_doses: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct McResult {
    pub config: ResolvedConfig,
    pub runs: Vec<ReplicateRun>,
    pub summary: Summary,
}

impl McResult {
    pub fn records(&self) -> impl Iterator<Item = &MetricRecord> {
        self.runs.iter().flat_map(|r| &r.records)
    }

    /// Writes `metrics.csv`, `summary.json` and `config.resolved.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
        for r in self.records() {
            w.serialize(r)?;
        }
        w.flush()?;
        write_json(&dir.join("summary.json"), &self.summary)?;
        write_json(&dir.join("config.resolved.json"), &self.config)?;
        Ok(())
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Trial seed for replicate `i` of a run with master seed `seed`.
pub fn replicate_seed(seed: u64, i: usize) -> u64 {
    crate::design::derived_seed(seed, i as u64)
}

/// Checks that `design` can run against `spec` (two agents, matching
/// covariates when personalized, valid settings).
pub fn check_compatible(spec: &ScenarioSpec, design: &DesignConfig) -> Result<(), HarnessError> {
    if design.dose_dims != 2 {
        return Err(HarnessError::InvalidArgument(
            "scenarios are defined over two agents".into(),
        ));
    }
    if design.mode == Mode::Personalized && design.covariates != spec.covariates {
        return Err(HarnessError::InvalidArgument(format!(
            "personalized design has {} covariates but scenario `{}` has {}",
            design.covariates, spec.name, spec.covariates
        )));
    }
    design.validate()?;
    Ok(())
}

/// Runs `options.replicates` independent seeded trials of `design` against
/// `spec` and tabulates per-iteration metrics for every scenario stratum.
///
/// Replicates that stop early carry their last state forward to the
/// full-budget iteration count so that iteration means are over the same
/// replicates throughout. Failed replicates are reported and excluded.
pub fn run_mc(spec: &ScenarioSpec, design: &DesignConfig, options: &McOptions) -> Result<McResult, HarnessError> {
    if options.replicates == 0 {
        return Err(HarnessError::InvalidArgument(
            "at least one replicate is required".into(),
        ));
    }
    if options.metric_draws == 0 {
        return Err(HarnessError::InvalidArgument(
            "at least one metric draw is required".into(),
        ));
    }
    check_compatible(spec, design)?;
    let seeds: Vec<u64> = (0..options.replicates)
        .map(|i| replicate_seed(options.seed, i))
        .collect();
    let results: Vec<Result<ReplicateRun, ReplicateFailure>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            run_replicate(spec, design, options, i, seed).map_err(|e| ReplicateFailure {
                replicate: i,
                seed,
                error: e.to_string(),
            })
        })
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err(f) => failures.push(f),
        }
    }
    if runs.is_empty() {
        return Err(HarnessError::AllReplicatesFailed(options.replicates));
    }
    let summary = summarize(spec, options, &runs, failures);
    Ok(McResult {
        config: ResolvedConfig {
            version: crate::VERSION.into(),
            scenario: spec.clone(),
            design: design.clone(),
            options: options.clone(),
            seeds,
        },
        runs,
        summary,
    })
}

fn format_dose(d: &Dose) -> String {
    d.coords().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

fn covariate_label(spec: &ScenarioSpec, k: usize) -> String {
    spec.strata[k].covariates.iter().map(|b| b.to_string()).collect()
}

fn run_replicate(
    spec: &ScenarioSpec,
    design: &DesignConfig,
    options: &McOptions,
    replicate: usize,
    seed: u64,
) -> Result<ReplicateRun, crate::DesignError> {
    let config = DesignConfig { seed, ..design.clone() };
    let mut trial = Trial::new(config)?;
    let mut oracle = ScenarioOracle::new(spec, crate::design::derived_rng(seed, ORACLE_STREAM));
    drive(&mut trial, &mut oracle)?;

    let strata = trial.strata().len();
    let by_iteration: Vec<&[IterationRecord]> = trial.history().chunks(strata).collect();
    let last_iteration = design.full_iterations().max(by_iteration.len() - 1);
    let mut rng = crate::design::derived_rng(seed, METRIC_STREAM);
    let mut draws = vec![0.0; options.metric_draws];
    let mut records = Vec::with_capacity((last_iteration + 1) * spec.stratum_count());
    for t in 0..=last_iteration {
        let carried = t >= by_iteration.len();
        let group = by_iteration[t.min(by_iteration.len() - 1)];
        for k in 0..spec.stratum_count() {
            let rec = &group[if design.mode == Mode::Personalized { k } else { 0 }];
            let truth = spec.objective(rec.point_estimate.coords(), k).expect("valid stratum");
            for v in draws.iter_mut() {
                *v = rec.estimate_mean + rec.estimate_sd * rng.sample::<f64, _>(StandardNormal);
            }
            records.push(MetricRecord {
                scenario: spec.name.clone(),
                design: options.label.clone(),
                replicate,
                iteration: t,
                stratum: k,
                covariates: covariate_label(spec, k),
                n: rec.n,
                stratum_n: oracle.strata()[..rec.n].iter().filter(|&&s| s == k).count(),
                d_hat: format_dose(&rec.point_estimate),
                dose_units: spec.strata[k]
                    .d_opt
                    .map(|d_opt| dose_units(rec.point_estimate.coords(), &d_opt, design.grid_step)),
                rpsel: rpsel(&draws, truth),
                abs_dev: abs_dev(rec.estimate_mean, truth),
                stopped: carried || rec.stopped,
                unique_doses: rec.unique_doses,
            });
        }
    }
    Ok(ReplicateRun {
        replicate,
        records,
        max_acquisition: by_iteration
            .iter()
            .map(|g| g.iter().map(|r| r.max_acquisition).collect())
            .collect(),
        final_n: trial.n(),
        unique_doses: trial.unique_doses(),
        stopped_early: trial.status() == crate::design::TrialStatus::StoppedEarly,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}

fn summarize(
    spec: &ScenarioSpec,
    options: &McOptions,
    runs: &[ReplicateRun],
    failures: Vec<ReplicateFailure>,
) -> Summary {
    let strata = spec.stratum_count();
    let rows = runs[0].records.len();
    let iterations = (0..rows)
        .map(|row| {
            let cell = || runs.iter().map(move |r| &r.records[row]);
            let first = &runs[0].records[row];
            IterationSummary {
                iteration: first.iteration,
                stratum: first.stratum,
                covariates: first.covariates.clone(),
                mean_n: mean(cell().map(|r| r.n as f64)),
                mean_stratum_n: mean(cell().map(|r| r.stratum_n as f64)),
                mean_dose_units: first
                    .dose_units
                    .map(|_| mean(cell().map(|r| r.dose_units.unwrap_or(f64::NAN)))),
                mean_rpsel: mean(cell().map(|r| r.rpsel)),
                mean_abs_dev: mean(cell().map(|r| r.abs_dev)),
                mean_unique_doses: mean(cell().map(|r| r.unique_doses as f64)),
                stopped_fraction: mean(cell().map(|r| if r.stopped { 1.0 } else { 0.0 })),
            }
        })
        .collect();
    let final_rows = rows - strata;
    Summary {
        scenario: spec.name.clone(),
        design: options.label.clone(),
        replicates: options.replicates,
        succeeded: runs.len(),
        failed: failures.len(),
        failures,
        iterations,
        final_: FinalSummary {
            expected_n: mean(runs.iter().map(|r| r.final_n as f64)),
            expected_unique_doses: mean(runs.iter().map(|r| r.unique_doses as f64)),
            expected_stratum_n: (0..strata)
                .map(|k| mean(runs.iter().map(|r| r.records[final_rows + k].stratum_n as f64)))
                .collect(),
            stopped_early_fraction: mean(runs.iter().map(|r| if r.stopped_early { 1.0 } else { 0.0 })),
        },
    }
}
