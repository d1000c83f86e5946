//! Ground-truth objective surfaces for simulation.
//!
//! Each stratum's objective is a constant offset plus a sum of weighted,
//! negated bivariate normal densities over the dose square. Scenarios are
//! plain JSON; the four built-ins are embedded verbatim.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::gp::Covariates;

const BUILTINS: &[(&str, &str)] = &[
    ("s1", include_str!("../scenarios/s1.json")),
    ("s2", include_str!("../scenarios/s2.json")),
    ("s3", include_str!("../scenarios/s3.json")),
    ("implant", include_str!("../scenarios/implant.json")),
];

/// Points per axis of the validation grid.
pub const FINE_GRID: usize = 401;

/// Relative tolerance for comparing computed truths with declared (rounded) values.
pub const TRUTH_TOLERANCE: f64 = 1e-3;

/// `weight * (-N(d; mean, covariance))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub weight: f64,
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

impl GaussianBump {
    fn det(&self) -> f64 {
        let c = &self.covariance;
        c[0][0] * c[1][1] - c[0][1] * c[1][0]
    }

    fn check(&self) -> Result<(), String> {
        let c = &self.covariance;
        if c[0][1] != c[1][0] || !(c[0][0] > 0.0) || !(self.det() > 0.0) {
            return Err("bump covariance must be symmetric positive definite".into());
        }
        if !self.weight.is_finite() || self.mean.iter().any(|m| !m.is_finite()) {
            return Err("bump weight and mean must be finite".into());
        }
        Ok(())
    }

    /// Bivariate normal density at `d`.
    pub fn density(&self, d: &[f64]) -> f64 {
        let c = &self.covariance;
        let det = self.det();
        let (u, v) = (d[0] - self.mean[0], d[1] - self.mean[1]);
        let q = (c[1][1] * u * u - 2.0 * c[0][1] * u * v + c[0][0] * v * v) / det;
        (-0.5 * q).exp() / (std::f64::consts::TAU * det.sqrt())
    }

    pub fn value(&self, d: &[f64]) -> f64 {
        -self.weight * self.density(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSpec {
    pub covariates: Vec<u8>,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub bumps: Vec<GaussianBump>,
    /// Declared optimal dose; `None` when the surface has no optimum.
    pub d_opt: Option<[f64; 2]>,
    pub f_opt: Option<f64>,
    pub ses: f64,
}

impl StratumSpec {
    pub fn objective(&self, d: &[f64]) -> f64 {
        self.offset + self.bumps.iter().map(|b| b.value(d)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Number of binary covariates `P`; there are `2^P` strata.
    pub covariates: usize,
    pub sigma_y: f64,
    /// Population frequency of each stratum for unstratified enrollment;
    /// equal when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub strata: Vec<StratumSpec>,
}

impl ScenarioSpec {
    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        let (_, text) = BUILTINS
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| ScenarioError::Unknown(name.to_string()))?;
        Self::from_json(text)
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTINS.iter().map(|(n, _)| *n)
    }

    /// Embedded JSON text of a built-in, byte for byte.
    pub fn builtin_source(name: &str) -> Option<&'static str> {
        BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.check()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Built-in name or path to a scenario file.
    pub fn resolve(name_or_path: &str) -> Result<Self, ScenarioError> {
        match Self::builtin(name_or_path) {
            Err(ScenarioError::Unknown(_)) if std::path::Path::new(name_or_path).exists() => {
                Self::from_path(name_or_path)
            }
            other => other,
        }
    }

    fn check(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(format!("{}: {m}", self.name)));
        if self.covariates > 8 {
            return invalid("at most 8 covariates supported".into());
        }
        if self.strata.len() != 1 << self.covariates {
            return invalid(format!(
                "expected {} strata for {} covariates, found {}",
                1 << self.covariates,
                self.covariates,
                self.strata.len()
            ));
        }
        if !(self.sigma_y >= 0.0 && self.sigma_y.is_finite()) {
            return invalid("sigma_y must be finite and non-negative".into());
        }
        for (k, s) in self.strata.iter().enumerate() {
            if s.covariates != Covariates::from_stratum(k, self.covariates).0 {
                return invalid(format!(
                    "stratum {k} must have covariates {:?}",
                    Covariates::from_stratum(k, self.covariates).0
                ));
            }
            for b in &s.bumps {
                if let Err(m) = b.check() {
                    return invalid(format!("stratum {k}: {m}"));
                }
            }
            if s.d_opt.is_some() != s.f_opt.is_some() {
                return invalid(format!("stratum {k}: d_opt and f_opt must both be set or both be null"));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.strata.len() || w.iter().any(|v| !(*v >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) {
                return invalid("weights must be one non-negative value per stratum with positive sum".into());
            }
        }
        Ok(())
    }

    pub fn stratum_count(&self) -> usize {
        self.strata.len()
    }

    pub fn stratum(&self, k: usize) -> Result<&StratumSpec, ScenarioError> {
        self.strata.get(k).ok_or(ScenarioError::InvalidStratum {
            stratum: k,
            strata: self.strata.len(),
        })
    }

    pub fn objective(&self, d: &[f64], stratum: usize) -> Result<f64, ScenarioError> {
        if d.len() != 2 {
            return Err(ScenarioError::Invalid(format!(
                "dose must have 2 coordinates, got {}",
                d.len()
            )));
        }
        Ok(self.stratum(stratum)?.objective(d))
    }

    pub fn objective_at(&self, d: &[f64], z: &Covariates) -> Result<f64, ScenarioError> {
        if z.len() != self.covariates {
            return Err(ScenarioError::InvalidStratum {
                stratum: z.stratum_index(),
                strata: self.strata.len(),
            });
        }
        self.objective(d, z.stratum_index())
    }

    pub fn sample_outcome<R: Rng + ?Sized>(
        &self,
        d: &[f64],
        stratum: usize,
        rng: &mut R,
    ) -> Result<f64, ScenarioError> {
        let f = self.objective(d, stratum)?;
        let e: f64 = rng.sample(StandardNormal);
        Ok(f + self.sigma_y * e)
    }

    /// Draws the stratum of an unselected patient from the population weights.
    pub fn sample_stratum<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let k = self.strata.len();
        match &self.weights {
            None => rng.gen_range(0..k),
            Some(w) => {
                let total: f64 = w.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                for (i, wi) in w.iter().enumerate() {
                    if u < *wi {
                        return i;
                    }
                    u -= wi;
                }
                k - 1
            }
        }
    }

    /// Checks declared optima, optimal values and effect sizes against a
    /// brute-force scan of each stratum on a `FINE_GRID x FINE_GRID` lattice.
    pub fn validate_truth(&self) -> Result<ValidationReport, ScenarioError> {
        let report = self.truth_report();
        if report.passed() {
            Ok(report)
        } else {
            Err(ScenarioError::Validation {
                scenario: self.name.clone(),
                failures: report.failures(),
            })
        }
    }

    pub fn truth_report(&self) -> ValidationReport {
        let step = 1.0 / (FINE_GRID - 1) as f64;
        let close = |a: f64, b: f64| (a - b).abs() <= TRUTH_TOLERANCE * b.abs().max(1.0);
        let strata = self
            .strata
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let (mut best, mut worst) = ((f64::INFINITY, [0.0, 0.0]), f64::NEG_INFINITY);
                for i in 0..FINE_GRID {
                    for j in 0..FINE_GRID {
                        let d = [i as f64 * step, j as f64 * step];
                        let v = s.objective(&d);
                        if v < best.0 {
                            best = (v, d);
                        }
                        worst = worst.max(v);
                    }
                }
                let mut problems = Vec::new();
                let flat = worst - best.0 <= 1e-12;
                let computed_ses = if flat { 0.0 } else { best.0.abs() / self.sigma_y };
                match (s.d_opt, s.f_opt) {
                    (Some(d_opt), Some(f_opt)) => {
                        if flat {
                            problems.push("declared an optimum but the surface is flat".to_string());
                        }
                        if (best.1[0] - d_opt[0]).abs() > step + 1e-12 || (best.1[1] - d_opt[1]).abs() > step + 1e-12 {
                            problems.push(format!(
                                "argmin {:?} is not within one cell of declared d_opt {:?}",
                                best.1, d_opt
                            ));
                        }
                        if !close(best.0, f_opt) {
                            problems.push(format!("minimum {:.6} differs from declared f_opt {f_opt}", best.0));
                        }
                        if !close(f_opt.abs() / self.sigma_y, s.ses) {
                            problems.push(format!(
                                "declared ses {} != |f_opt|/sigma_y = {:.6}",
                                s.ses,
                                f_opt.abs() / self.sigma_y
                            ));
                        }
                    }
                    _ => {
                        if !flat {
                            problems.push("no optimum declared but the surface is not flat".to_string());
                        }
                        if s.ses != 0.0 {
                            problems.push(format!("declared ses {} for a stratum without an optimum", s.ses));
                        }
                    }
                }
                if !close(computed_ses, s.ses) {
                    problems.push(format!(
                        "computed ses {computed_ses:.6} differs from declared {}",
                        s.ses
                    ));
                }
                StratumValidation {
                    stratum: k,
                    covariates: s.covariates.clone(),
                    argmin: best.1,
                    minimum: best.0,
                    ses: computed_ses,
                    declared_d_opt: s.d_opt,
                    declared_f_opt: s.f_opt,
                    declared_ses: s.ses,
                    problems,
                }
            })
            .collect();
        ValidationReport {
            scenario: self.name.clone(),
            strata,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StratumValidation {
    pub stratum: usize,
    pub covariates: Vec<u8>,
    pub argmin: [f64; 2],
    pub minimum: f64,
    pub ses: f64,
    pub declared_d_opt: Option<[f64; 2]>,
    pub declared_f_opt: Option<f64>,
    pub declared_ses: f64,
    pub problems: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub strata: Vec<StratumValidation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.strata.iter().all(|s| s.problems.is_empty())
    }

    pub fn failures(&self) -> Vec<String> {
        self.strata
            .iter()
            .flat_map(|s| {
                s.problems
                    .iter()
                    .map(move |p| format!("stratum {} {:?}: {p}", s.stratum, s.covariates))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn peak(det: f64) -> f64 {
        1.0 / (std::f64::consts::TAU * det.sqrt())
    }

    #[test]
    fn density_peaks() {
        let s1 = ScenarioSpec::builtin("s1").unwrap();
        assert_abs_diff_eq!(s1.strata[0].bumps[0].density(&[1.0, 1.0]), peak(0.01), epsilon = 1e-15);
        assert_abs_diff_eq!(peak(0.01), 1.591_549_430_918_953_3, epsilon = 1e-15);
        let s2 = ScenarioSpec::builtin("s2").unwrap();
        assert_abs_diff_eq!(
            s2.strata[0].bumps[0].density(&[0.25, 0.75]),
            1.203_098_283_850_835_3,
            epsilon = 1e-14
        );
    }

    #[test]
    fn objective_examples() {
        let s1 = ScenarioSpec::builtin("s1").unwrap();
        assert_abs_diff_eq!(s1.objective(&[1.0, 1.0], 0).unwrap(), -1.5915, epsilon = 1e-4);
        // scipy.stats.multivariate_normal reference values
        assert_abs_diff_eq!(
            s1.objective(&[0.5, 0.25], 1).unwrap(),
            -0.027_384_120_608_683_487,
            epsilon = 1e-14
        );
        let s2 = ScenarioSpec::builtin("s2").unwrap();
        assert_abs_diff_eq!(s2.objective(&[0.25, 0.75], 0).unwrap(), -1.2030, epsilon = 1e-4);
        assert_abs_diff_eq!(
            s2.objective(&[0.6, 0.1], 0).unwrap(),
            -0.039_581_811_108_996_59,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            s2.objective(&[0.1, 0.9], 1).unwrap(),
            -0.009_622_306_366_955_977,
            epsilon = 1e-14
        );
        let imp = ScenarioSpec::builtin("implant").unwrap();
        assert_abs_diff_eq!(imp.objective(&[0.75, 0.25], 1).unwrap(), -10.0, epsilon = 1e-3);
        let s3 = ScenarioSpec::builtin("s3").unwrap();
        for d in [[0.0, 0.0], [0.3, 0.9], [1.0, 1.0]] {
            assert_eq!(s3.objective(&d, 0).unwrap(), 0.0);
        }
        assert!(matches!(
            s3.objective(&[0.5, 0.5], 4),
            Err(ScenarioError::InvalidStratum { stratum: 4, strata: 4 })
        ));
    }

    #[test]
    fn scenario_one_is_homogeneous() {
        let s1 = ScenarioSpec::builtin("s1").unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                let d = [i as f64 / 20.0, j as f64 / 20.0];
                assert_eq!(s1.objective(&d, 0).unwrap(), s1.objective(&d, 1).unwrap());
            }
        }
    }

    #[test]
    fn second_and_third_bumps_are_translates() {
        // both share one covariance; the third bump is the second shifted by (0.5, -0.5)
        let s2 = ScenarioSpec::builtin("s2").unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                let d = [i as f64 / 20.0, j as f64 / 20.0];
                let shifted = [d[0] - 0.5, d[1] + 0.5];
                assert_abs_diff_eq!(
                    s2.strata[1].objective(&d),
                    s2.strata[0].objective(&shifted),
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn builtins_validate() {
        for name in ScenarioSpec::builtin_names() {
            let spec = ScenarioSpec::builtin(name).unwrap();
            let report = spec.validate_truth().unwrap_or_else(|e| panic!("{e}"));
            assert!(report.passed());
        }
        let s2 = ScenarioSpec::builtin("s2").unwrap().truth_report();
        assert_eq!(s2.strata[1].argmin, [0.75, 0.25]);
        assert_abs_diff_eq!(s2.strata[1].minimum, -1.203, epsilon = 1e-3);
        let s3 = ScenarioSpec::builtin("s3").unwrap().truth_report();
        assert_abs_diff_eq!(s3.strata[2].minimum, -3.134 * 1.203_098_283_850_835_3, epsilon = 1e-12);
        let imp = ScenarioSpec::builtin("implant").unwrap().truth_report();
        assert_abs_diff_eq!(imp.strata[0].ses, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn corrupted_truth_is_reported_by_stratum() {
        let mut spec = ScenarioSpec::builtin("s2").unwrap();
        spec.strata[1].d_opt = Some([0.25, 0.75]);
        match spec.validate_truth() {
            Err(ScenarioError::Validation { failures, .. }) => {
                assert_eq!(failures.len(), 1);
                assert!(failures[0].starts_with("stratum 1"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn structural_checks() {
        let bad = ScenarioSpec::builtin_source("s1")
            .unwrap()
            .replace("\"covariates\": 1", "\"covariates\": 2");
        assert!(matches!(ScenarioSpec::from_json(&bad), Err(ScenarioError::Invalid(_))));
        let bad = ScenarioSpec::builtin_source("s1")
            .unwrap()
            .replace("[[0.1, 0.0], [0.0, 0.1]]", "[[0.1, 0.0], [0.0, -0.1]]");
        assert!(matches!(ScenarioSpec::from_json(&bad), Err(ScenarioError::Invalid(_))));
        assert!(matches!(ScenarioSpec::builtin("s9"), Err(ScenarioError::Unknown(_))));
    }

    #[test]
    fn outcome_noise() {
        let mut spec = ScenarioSpec::builtin("s1").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = [0.5, 0.5];
        let f = spec.objective(&d, 0).unwrap();
        let n = 100_000;
        let ys: Vec<f64> = (0..n).map(|_| spec.sample_outcome(&d, 0, &mut rng).unwrap()).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - f).abs() < 4.0 * 2.015 / (n as f64).sqrt());
        // sd of a normal sample has standard error sigma / sqrt(2(n-1))
        assert!((sd - 2.015).abs() < 4.0 * 2.015 / (2.0 * n as f64).sqrt());

        spec.sigma_y = 0.0;
        assert_eq!(spec.sample_outcome(&d, 1, &mut rng).unwrap(), f);
    }

    #[test]
    fn population_strata_are_uniform_by_default() {
        let spec = ScenarioSpec::builtin("s3").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[spec.sample_stratum(&mut rng)] += 1;
        }
        assert!(
            counts.iter().all(|&c| (c as f64 - 10_000.0).abs() < 400.0),
            "{counts:?}"
        );
    }
}
