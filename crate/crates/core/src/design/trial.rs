use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DesignConfig, Mode};
use super::grid::{initial_design, make_grid};
use super::stopping::StoppingState;
use crate::acquisition::{argmin_index, expected_improvement_closed, AcquisitionContext, AcquisitionKind};
use crate::error::{DesignError, GpError};
use crate::gp::{fit, Covariates};
use crate::{Dose, Gp, Hyper, Obs};

const RECOMMEND_STREAM: u64 = 1 << 63;

/// Generator for the `stream`-th random sequence under `seed`.
pub fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// First word of [`derived_rng`], used to hand out independent seeds.
pub fn derived_seed(seed: u64, stream: u64) -> u64 {
    derived_rng(seed, stream).gen()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Enrolling,
    StoppedEarly,
    BudgetComplete,
    Failed,
}

impl TrialStatus {
    pub fn is_terminal(self) -> bool {
        self != Self::Enrolling
    }
}

/// Patients awaited at one dose in one stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub stratum: usize,
    pub covariates: Covariates,
    pub dose: Dose,
    pub patients: usize,
    /// Outcomes received so far, in submission order.
    pub received: Vec<f64>,
}

impl Assignment {
    pub fn remaining(&self) -> usize {
        self.patients - self.received.len()
    }
}

/// One observed response on the objective scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub stratum: usize,
    pub dose: Dose,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedDose {
    pub dose: Dose,
    pub outcomes: Vec<f64>,
}

/// Posterior and acquisition over the grid for one stratum after a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumAnalysis {
    pub stratum: usize,
    pub covariates: Covariates,
    /// Posterior mean, sd and acquisition value at each grid point, in grid order.
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub acquisition: Vec<f64>,
    pub effective_best: Dose,
    pub f_star: f64,
    pub max_acquisition: f64,
    pub next_dose: Dose,
    /// Grid minimizer of the posterior mean.
    pub point_estimate: Dose,
    pub estimate_mean: f64,
    pub estimate_sd: f64,
}

/// Log line written for every stratum after every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Acquisition iterations completed; 0 is the fit to the initial design.
    pub iteration: usize,
    pub n: usize,
    pub stratum: usize,
    pub covariates: Covariates,
    /// Doses and outcomes this stratum received in the cohort just completed.
    pub evaluated: Vec<EvaluatedDose>,
    pub hyperparameters: Hyper,
    pub log_likelihood: f64,
    pub fit_retried: bool,
    pub effective_best: Dose,
    pub f_star: f64,
    pub max_acquisition: f64,
    pub point_estimate: Dose,
    pub estimate_mean: f64,
    pub estimate_sd: f64,
    pub consecutive_below: usize,
    pub stopped: bool,
    /// Patients enrolled in this stratum so far.
    pub enrolled: usize,
    pub unique_doses: usize,
    /// Dose and cohort size planned for this stratum next, if any.
    pub suggested: Option<Dose>,
    pub suggested_patients: usize,
}

/// Serializable state of a trial; equal snapshots mean equal trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSnapshot {
    pub config: DesignConfig,
    pub status: TrialStatus,
    pub failure: Option<String>,
    pub iteration: usize,
    pub n: usize,
    pub enrolled: Vec<usize>,
    pub doses_evaluated: Vec<usize>,
    pub stopping: Vec<StoppingState>,
    pub unique_doses: usize,
    pub pending: Vec<Assignment>,
    pub hyperparameters: Option<Hyper>,
    pub analyses: Vec<StratumAnalysis>,
}

/// What a submission did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitProgress {
    pub accepted: usize,
    pub cohort_complete: bool,
    /// Outcomes still awaited in the current cohort.
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMass {
    pub dose: Dose,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRecommendation {
    pub stratum: usize,
    pub covariates: Covariates,
    pub dose: Dose,
    pub mean: f64,
    pub sd: f64,
    /// Joint posterior draws of the objective at `dose`.
    pub draws: Vec<f64>,
    /// Share of joint posterior draws minimized at each grid point.
    pub optimum_distribution: Vec<GridMass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseRecommendation {
    pub iteration: usize,
    pub n: usize,
    pub strata: Vec<StratumRecommendation>,
}

/// The sequential design as a state machine driven by outcome submissions.
///
/// A trial starts with the initial design pending. Each completed cohort
/// triggers one refit; the refit updates stopping counters and either plans
/// the next cohort or ends the trial.
#[derive(Debug, Clone)]
pub struct Trial {
    config: DesignConfig,
    grid: Vec<Dose>,
    strata: Vec<Covariates>,
    data: Vec<Obs>,
    enrolled: Vec<usize>,
    doses_evaluated: Vec<usize>,
    stopping: Vec<StoppingState>,
    iteration: usize,
    pending: Vec<Assignment>,
    model: Option<Gp>,
    analyses: Vec<StratumAnalysis>,
    history: Vec<IterationRecord>,
    status: TrialStatus,
    failure: Option<String>,
    fits: u64,
}

impl Trial {
    pub fn new(config: DesignConfig) -> Result<Self, DesignError> {
        config.validate()?;
        let grid = make_grid(config.dose_dims, config.grid_step)?;
        let strata: Vec<Covariates> = match config.mode {
            Mode::Standard => vec![Covariates::none()],
            Mode::Personalized => (0..config.strata())
                .map(|k| Covariates::from_stratum(k, config.covariates))
                .collect(),
        };
        let doses = initial_design(config.initial_doses, config.dose_dims, config.grid_step)?;
        let pending = strata
            .iter()
            .enumerate()
            .flat_map(|(k, z)| {
                doses.iter().map(move |d| Assignment {
                    stratum: k,
                    covariates: z.clone(),
                    dose: d.clone(),
                    patients: config.cohort_size,
                    received: Vec::new(),
                })
            })
            .collect();
        let k = strata.len();
        Ok(Self {
            grid,
            strata,
            data: Vec::new(),
            enrolled: vec![0; k],
            doses_evaluated: vec![0; k],
            stopping: vec![StoppingState::default(); k],
            iteration: 0,
            pending,
            model: None,
            analyses: Vec::new(),
            history: Vec::new(),
            status: TrialStatus::Enrolling,
            failure: None,
            fits: 0,
            config,
        })
    }

    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    pub fn grid(&self) -> &[Dose] {
        &self.grid
    }

    pub fn strata(&self) -> &[Covariates] {
        &self.strata
    }

    pub fn status(&self) -> TrialStatus {
        self.status
    }

    pub fn failure(&self) -> Option<&str> {
        self.failure.as_deref()
    }

    /// Index of the cohort currently being enrolled (0 is the initial design).
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[Obs] {
        &self.data
    }

    pub fn enrolled(&self) -> &[usize] {
        &self.enrolled
    }

    pub fn doses_evaluated(&self) -> &[usize] {
        &self.doses_evaluated
    }

    pub fn stopping(&self) -> &[StoppingState] {
        &self.stopping
    }

    pub fn pending(&self) -> &[Assignment] {
        &self.pending
    }

    pub fn model(&self) -> Option<&Gp> {
        self.model.as_ref()
    }

    pub fn analyses(&self) -> &[StratumAnalysis] {
        &self.analyses
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    /// Distinct dose combinations evaluated so far, across all strata.
    pub fn unique_doses(&self) -> usize {
        let mut seen: Vec<&Dose> = self.data.iter().map(|o| &o.dose).collect();
        seen.sort_by(|a, b| a.lex_cmp(b));
        seen.dedup_by(|a, b| a.lex_cmp(b).is_eq());
        seen.len()
    }

    pub fn snapshot(&self) -> TrialSnapshot {
        TrialSnapshot {
            config: self.config.clone(),
            status: self.status,
            failure: self.failure.clone(),
            iteration: self.iteration,
            n: self.n(),
            enrolled: self.enrolled.clone(),
            doses_evaluated: self.doses_evaluated.clone(),
            stopping: self.stopping.clone(),
            unique_doses: self.unique_doses(),
            pending: self.pending.clone(),
            hyperparameters: self.model.as_ref().map(|m| m.hyperparameters().clone()),
            analyses: self.analyses.clone(),
        }
    }

    /// Records outcomes against pending assignments. The batch is applied
    /// atomically: either every outcome matches an open slot or nothing
    /// changes. Completing the cohort refits the surrogate.
    pub fn submit(&mut self, outcomes: &[Outcome]) -> Result<SubmitProgress, DesignError> {
        if self.status.is_terminal() {
            return Err(DesignError::NotEnrolling(format!("{:?}", self.status)));
        }
        let mut room: Vec<usize> = self.pending.iter().map(Assignment::remaining).collect();
        let mut targets = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            if !o.response.is_finite() {
                return Err(DesignError::InvalidArgument(format!(
                    "non-finite response {}",
                    o.response
                )));
            }
            let slot = self
                .pending
                .iter()
                .enumerate()
                .position(|(i, a)| a.stratum == o.stratum && a.dose == o.dose && room[i] > 0)
                .ok_or_else(|| {
                    DesignError::Conflict(format!(
                        "no open assignment for dose {} in stratum {}",
                        o.dose, o.stratum
                    ))
                })?;
            room[slot] -= 1;
            targets.push(slot);
        }
        for (o, &slot) in outcomes.iter().zip(&targets) {
            let a = &mut self.pending[slot];
            a.received.push(o.response);
            self.data.push(Obs {
                dose: a.dose.clone(),
                covariates: a.covariates.clone(),
                response: o.response,
            });
        }
        let remaining: usize = self.pending.iter().map(Assignment::remaining).sum();
        let cohort_complete = remaining == 0;
        if cohort_complete {
            self.complete_cohort()?;
        }
        Ok(SubmitProgress {
            accepted: outcomes.len(),
            cohort_complete,
            remaining: self.pending.iter().map(Assignment::remaining).sum(),
        })
    }

    fn complete_cohort(&mut self) -> Result<(), DesignError> {
        let cohort = std::mem::take(&mut self.pending);
        let mut evaluated: Vec<Vec<EvaluatedDose>> = vec![Vec::new(); self.strata.len()];
        for a in cohort {
            self.enrolled[a.stratum] += a.patients;
            self.doses_evaluated[a.stratum] += 1;
            evaluated[a.stratum].push(EvaluatedDose {
                dose: a.dose,
                outcomes: a.received,
            });
        }

        let (model, log_likelihood, retried) = match self.fit_model() {
            Ok(v) => v,
            Err(e) => {
                self.status = TrialStatus::Failed;
                self.failure = Some(e.to_string());
                return Err(e.into());
            }
        };
        self.analyses = (0..self.strata.len())
            .map(|k| self.analyze(&model, k))
            .collect::<Result<_, _>>()?;
        let hyper = model.hyperparameters().clone();
        self.model = Some(model);

        if self.iteration > 0 {
            for (state, a) in self.stopping.iter_mut().zip(&self.analyses) {
                if !state.stopped {
                    state.update(a.max_acquisition, self.config.delta, self.config.consecutive_required);
                }
            }
        }
        if self.n() >= self.config.max_n {
            self.status = TrialStatus::BudgetComplete;
        } else if self.stopping.iter().all(|s| s.stopped) {
            self.status = TrialStatus::StoppedEarly;
        } else {
            self.pending = self.plan_cohort();
        }

        let unique_doses = self.unique_doses();
        for (k, (a, evaluated)) in self.analyses.iter().zip(evaluated).enumerate() {
            let next = self.pending.iter().find(|p| p.stratum == k);
            self.history.push(IterationRecord {
                iteration: self.iteration,
                n: self.data.len(),
                stratum: k,
                covariates: self.strata[k].clone(),
                evaluated,
                hyperparameters: hyper.clone(),
                log_likelihood,
                fit_retried: retried,
                effective_best: a.effective_best.clone(),
                f_star: a.f_star,
                max_acquisition: a.max_acquisition,
                point_estimate: a.point_estimate.clone(),
                estimate_mean: a.estimate_mean,
                estimate_sd: a.estimate_sd,
                consecutive_below: self.stopping[k].consecutive_below,
                stopped: self.stopping[k].stopped,
                enrolled: self.enrolled[k],
                unique_doses,
                suggested: next.map(|p| p.dose.clone()),
                suggested_patients: next.map_or(0, |p| p.patients),
            });
        }
        if !self.status.is_terminal() {
            self.iteration += 1;
        }
        Ok(())
    }

    /// Fits the surrogate, retrying once with an escalated jitter ladder.
    fn fit_model(&mut self) -> Result<(Gp, f64, bool), GpError> {
        let attempt = |config: &crate::gp::FitConfig, fits: &mut u64| {
            let mut rng = derived_rng(self.config.seed, *fits);
            *fits += 1;
            fit(&self.data, config, &mut rng)
        };
        match attempt(&self.config.fit, &mut self.fits) {
            Ok(out) => Ok((out.model, out.report.log_likelihood, false)),
            Err(_) => {
                let mut retry = self.config.fit.clone();
                retry.jitter = retry.jitter.escalated(2);
                let out = attempt(&retry, &mut self.fits)?;
                Ok((out.model, out.report.log_likelihood, true))
            }
        }
    }

    fn analyze(&self, model: &Gp, k: usize) -> Result<StratumAnalysis, GpError> {
        let z = &self.strata[k];
        let preds = self
            .grid
            .iter()
            .map(|d| model.predict(d, z))
            .collect::<Result<Vec<_>, _>>()?;
        let mean: Vec<f64> = preds.iter().map(|p| p.mean).collect();
        let sd: Vec<f64> = preds.iter().map(|p| p.sd()).collect();
        let score: Vec<f64> = mean.iter().zip(&sd).map(|(m, s)| m + self.config.gamma * s).collect();
        let best = argmin_index(&self.grid, &score).expect("grid is non-empty");
        let f_star = mean[best];
        let ctx = AcquisitionContext {
            model,
            covariates: z.clone(),
            f_star,
            gamma: self.config.gamma,
            noise_scale: self.config.noise_scale,
        };
        let acquisition: Vec<f64> = preds
            .iter()
            .map(|p| match self.config.acquisition {
                AcquisitionKind::Aei => ctx.aei_from(p),
                AcquisitionKind::Ei => expected_improvement_closed(p.mean, p.sd(), f_star),
            })
            .collect();
        let negated: Vec<f64> = acquisition.iter().map(|v| -v).collect();
        let next = argmin_index(&self.grid, &negated).expect("grid is non-empty");
        let est = argmin_index(&self.grid, &mean).expect("grid is non-empty");
        Ok(StratumAnalysis {
            stratum: k,
            covariates: z.clone(),
            effective_best: self.grid[best].clone(),
            f_star,
            max_acquisition: acquisition[next],
            next_dose: self.grid[next].clone(),
            point_estimate: self.grid[est].clone(),
            estimate_mean: mean[est],
            estimate_sd: sd[est],
            mean,
            sd,
            acquisition,
        })
    }

    /// Next cohort: one acquisition-maximizing dose per open stratum, with
    /// stopped strata's slots handed to the least-enrolled open strata and the
    /// final cohort truncated in stratum order to fit the budget.
    fn plan_cohort(&self) -> Vec<Assignment> {
        let r = self.config.cohort_size;
        let open: Vec<usize> = (0..self.strata.len()).filter(|&k| !self.stopping[k].stopped).collect();
        let mut slots = vec![0usize; self.strata.len()];
        let mut projected = self.enrolled.clone();
        for &k in &open {
            slots[k] = 1;
            projected[k] += r;
        }
        if self.config.reallocate {
            for _ in 0..self.strata.len() - open.len() {
                let &k = open
                    .iter()
                    .min_by_key(|&&k| (projected[k], k))
                    .expect("an open stratum");
                slots[k] += 1;
                projected[k] += r;
            }
        }
        let mut budget = self.config.max_n - self.n();
        let mut cohort = Vec::new();
        for (k, &s) in slots.iter().enumerate() {
            let patients = (s * r).min(budget);
            if patients == 0 {
                continue;
            }
            budget -= patients;
            cohort.push(Assignment {
                stratum: k,
                covariates: self.strata[k].clone(),
                dose: self.analyses[k].next_dose.clone(),
                patients,
                received: Vec::new(),
            });
        }
        cohort
    }

    /// Posterior-mean minimizer per stratum plus the distribution of the
    /// optimum from joint posterior draws over the grid. Draws come from a
    /// stream reserved for recommendations, so calling this does not perturb
    /// the trial.
    pub fn recommend(&self) -> Result<DoseRecommendation, DesignError> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| DesignError::NotEnrolling("no fitted model yet".into()))?;
        let mut rng = derived_rng(self.config.seed, RECOMMEND_STREAM | self.fits);
        let draws = self.config.posterior_draws;
        let strata = self
            .analyses
            .iter()
            .map(|a| {
                let est = self
                    .grid
                    .iter()
                    .position(|d| *d == a.point_estimate)
                    .expect("point estimate is a grid point");
                let (optimum_distribution, samples) =
                    posterior_optimum(model, &self.grid, &a.covariates, draws, &mut rng)?;
                Ok(StratumRecommendation {
                    stratum: a.stratum,
                    covariates: a.covariates.clone(),
                    dose: a.point_estimate.clone(),
                    mean: a.estimate_mean,
                    sd: a.estimate_sd,
                    draws: samples.iter().map(|s| s[est]).collect(),
                    optimum_distribution,
                })
            })
            .collect::<Result<Vec<_>, GpError>>()?;
        Ok(DoseRecommendation {
            iteration: self.history.last().map_or(0, |r| r.iteration),
            n: self.n(),
            strata,
        })
    }
}

/// Distribution of the grid minimizer under `draws` joint posterior samples
/// over `grid`, returned with the samples themselves.
pub fn posterior_optimum<R: rand::Rng + ?Sized>(
    model: &Gp,
    grid: &[Dose],
    covariates: &Covariates,
    draws: usize,
    rng: &mut R,
) -> Result<(Vec<GridMass>, Vec<Vec<f64>>), GpError> {
    let points: Vec<(Dose, Covariates)> = grid.iter().map(|d| (d.clone(), covariates.clone())).collect();
    let samples = model.sample_joint(&points, draws, rng)?;
    let mut counts = vec![0usize; grid.len()];
    for s in &samples {
        if let Some(i) = argmin_index(grid, s) {
            counts[i] += 1;
        }
    }
    let masses = grid
        .iter()
        .zip(counts)
        .map(|(d, c)| GridMass {
            dose: d.clone(),
            mass: c as f64 / draws.max(1) as f64,
        })
        .collect();
    Ok((masses, samples))
}

#[cfg(test)]
impl Trial {
    /// Marks stratum `k` stopped and replans the pending cohort.
    pub(super) fn force_stop(&mut self, k: usize) {
        self.stopping[k].stopped = true;
        self.pending = self.plan_cohort();
    }
}
