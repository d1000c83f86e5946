use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mc::{run_mc, write_json, McOptions, McResult};
use super::metrics::quantile;
use crate::design::DesignConfig;
use crate::error::HarnessError;
use crate::scenarios::ScenarioSpec;

/// Distribution across replicates (and strata) of the grid maximum of the
/// acquisition at one iteration of a no-stopping pilot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeiQuantiles {
    pub iteration: usize,
    /// Cumulative sample size after the iteration.
    pub n: usize,
    pub count: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaProposal {
    pub target_n: usize,
    /// Iteration at which the target sample size is reached.
    pub target_iteration: usize,
    /// Iteration whose median supplies the threshold.
    pub source_iteration: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCalibration {
    pub quantiles: Vec<AeiQuantiles>,
    pub proposals: Vec<DeltaProposal>,
}

impl DeltaCalibration {
    /// Writes `aei_quantiles.csv` and `calibration.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("aei_quantiles.csv"))?;
        for q in &self.quantiles {
            w.serialize(q)?;
        }
        w.flush()?;
        write_json(&dir.join("calibration.json"), self)
    }
}

/// Per-iteration quantiles of the maximum acquisition pooled over the
/// replicates and trial strata of `pilot`.
pub fn aei_quantiles(pilot: &McResult) -> Vec<AeiQuantiles> {
    let design = &pilot.config.design;
    let iterations = pilot.runs.iter().map(|r| r.max_acquisition.len()).max().unwrap_or(0);
    (0..iterations)
        .filter_map(|t| {
            let mut values: Vec<f64> = pilot
                .runs
                .iter()
                .filter_map(|r| r.max_acquisition.get(t))
                .flatten()
                .copied()
                .collect();
            if values.is_empty() {
                return None;
            }
            values.sort_by(f64::total_cmp);
            Some(AeiQuantiles {
                iteration: t,
                n: (design.initial_n() + t * design.per_iteration()).min(design.max_n),
                count: values.len(),
                min: values[0],
                q25: quantile(&values, 0.25),
                median: quantile(&values, 0.5),
                q75: quantile(&values, 0.75),
                max: values[values.len() - 1],
            })
        })
        .collect()
}

/// Threshold expected to stop a trial near `target_n`: the pilot median at
/// the iteration reaching `target_n`, moved back by the number of
/// consecutive iterations the stopping rule needs.
pub fn propose_delta(
    quantiles: &[AeiQuantiles],
    design: &DesignConfig,
    target_n: usize,
) -> Result<DeltaProposal, HarnessError> {
    if target_n > design.max_n {
        return Err(HarnessError::InvalidArgument(format!(
            "target sample size {target_n} exceeds the budget {}",
            design.max_n
        )));
    }
    if target_n < design.initial_n() {
        return Err(HarnessError::InvalidArgument(format!(
            "target sample size {target_n} is below the initial design size {}",
            design.initial_n()
        )));
    }
    let per = design.per_iteration() as f64;
    let target_iteration = ((target_n - design.initial_n()) as f64 / per).round() as usize;
    // stopping is first checked after iteration 1
    let source_iteration = target_iteration.saturating_sub(design.consecutive_required).max(1);
    let q = quantiles
        .iter()
        .find(|q| q.iteration == source_iteration)
        .ok_or_else(|| HarnessError::InvalidArgument(format!("pilot has no iteration {source_iteration}")))?;
    Ok(DeltaProposal {
        target_n,
        target_iteration,
        source_iteration,
        delta: q.median,
    })
}

/// Runs a pilot with stopping disabled and proposes one threshold per target.
pub fn calibrate_delta(
    spec: &ScenarioSpec,
    design: &DesignConfig,
    options: &McOptions,
    targets: &[usize],
) -> Result<(DeltaCalibration, McResult), HarnessError> {
    if targets.is_empty() {
        return Err(HarnessError::InvalidArgument("no target sample sizes".into()));
    }
    for &t in targets {
        if t > design.max_n {
            return Err(HarnessError::InvalidArgument(format!(
                "target sample size {t} exceeds the budget {}",
                design.max_n
            )));
        }
    }
    let pilot_design = DesignConfig {
        delta: 0.0,
        ..design.clone()
    };
    let pilot = run_mc(spec, &pilot_design, options)?;
    let calibration = calibration_from_pilot(&pilot, targets)?;
    Ok((calibration, pilot))
}

pub fn calibration_from_pilot(pilot: &McResult, targets: &[usize]) -> Result<DeltaCalibration, HarnessError> {
    let quantiles = aei_quantiles(pilot);
    let proposals = targets
        .iter()
        .map(|&t| propose_delta(&quantiles, &pilot.config.design, t))
        .collect::<Result<_, _>>()?;
    Ok(DeltaCalibration { quantiles, proposals })
}
