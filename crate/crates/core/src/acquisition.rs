//! Expected improvement (EI), augmented expected improvement (AEI) and the
//! effective best point, evaluated over a finite candidate grid.
//!
//! Everything here minimizes: improvement means going below the incumbent
//! `f_star`. Ties between candidates are broken lexicographically on dose
//! coordinates.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::GpError;
use crate::gp::{Covariates, DoseCombination, GpModel, Prediction};
use crate::scalar::{norm_cdf, norm_pdf, Scalar};

/// Which noise standard deviation enters the AEI penalty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    /// `sqrt(nu * tau2)`: observation noise on the scale of the posterior variance.
    #[default]
    ObservationSd,
    /// `sqrt(tau2)`: the relative nugget taken literally.
    RelativeNugget,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    #[default]
    Aei,
    Ei,
}

/// Closed-form EI for a normal posterior `N(mean, sd^2)`; never negative.
pub fn expected_improvement_closed<T: Scalar>(mean: T, sd: T, f_star: T) -> T {
    let gap = f_star - mean;
    if !(sd > T::zero()) {
        return gap.max(T::zero());
    }
    let z = gap / sd;
    (gap * norm_cdf(z) + sd * norm_pdf(z)).max(T::zero())
}

/// Multiplicative AEI penalty `1 - s / sqrt(variance + s^2)` for noise sd `s`.
pub fn aei_penalty<T: Scalar>(variance: T, noise_sd: T) -> T {
    if !(noise_sd > T::zero()) {
        return T::one();
    }
    T::one() - noise_sd / (variance.max(T::zero()) + noise_sd * noise_sd).sqrt()
}

/// Order on candidates: by value, then lexicographically by dose.
fn better<T: Scalar>(
    value: T,
    dose: &DoseCombination<T>,
    best: Option<(T, &DoseCombination<T>)>,
    maximize: bool,
) -> bool {
    match best {
        None => true,
        Some((bv, bd)) => {
            let ord = if maximize {
                value.partial_cmp(&bv)
            } else {
                bv.partial_cmp(&value)
            };
            match ord {
                Some(Ordering::Greater) => true,
                Some(Ordering::Equal) => dose.lex_cmp(bd) == Ordering::Less,
                _ => false,
            }
        }
    }
}

/// Incumbent and model for evaluating acquisitions within one stratum.
#[derive(Debug, Clone)]
pub struct AcquisitionContext<'a, T = f64> {
    pub model: &'a GpModel<T>,
    pub covariates: Covariates,
    pub f_star: T,
    pub gamma: T,
    pub noise_scale: NoiseScale,
}

impl<'a, T: Scalar> AcquisitionContext<'a, T> {
    /// Context whose incumbent is the posterior mean at the effective best
    /// candidate (`argmin mean + gamma * sd`).
    pub fn at_effective_best(
        model: &'a GpModel<T>,
        candidates: &[DoseCombination<T>],
        covariates: Covariates,
        gamma: T,
        noise_scale: NoiseScale,
    ) -> Result<(Self, DoseCombination<T>), GpError> {
        let (d_star, f_star) = effective_best(model, candidates, &covariates, gamma)?;
        Ok((
            Self {
                model,
                covariates,
                f_star,
                gamma,
                noise_scale,
            },
            d_star,
        ))
    }

    pub fn noise_sd(&self) -> T {
        let h = self.model.hyperparameters();
        match self.noise_scale {
            NoiseScale::ObservationSd => (h.nu * h.tau2).sqrt(),
            NoiseScale::RelativeNugget => h.tau2.sqrt(),
        }
    }

    pub fn expected_improvement(&self, dose: &DoseCombination<T>) -> Result<T, GpError> {
        let p = self.model.predict(dose, &self.covariates)?;
        Ok(expected_improvement_closed(p.mean, p.sd(), self.f_star))
    }

    pub fn augmented_expected_improvement(&self, dose: &DoseCombination<T>) -> Result<T, GpError> {
        let p = self.model.predict(dose, &self.covariates)?;
        Ok(self.aei_from(&p))
    }

    pub fn aei_from(&self, p: &Prediction<T>) -> T {
        expected_improvement_closed(p.mean, p.sd(), self.f_star) * aei_penalty(p.variance, self.noise_sd())
    }

    pub fn value(&self, kind: AcquisitionKind, dose: &DoseCombination<T>) -> Result<T, GpError> {
        match kind {
            AcquisitionKind::Aei => self.augmented_expected_improvement(dose),
            AcquisitionKind::Ei => self.expected_improvement(dose),
        }
    }
}

/// `argmin mean + gamma * sd` over `candidates`, returning the point and its
/// posterior mean (the incumbent `f_star`).
pub fn effective_best<T: Scalar>(
    model: &GpModel<T>,
    candidates: &[DoseCombination<T>],
    covariates: &Covariates,
    gamma: T,
) -> Result<(DoseCombination<T>, T), GpError> {
    let mut best: Option<(T, usize, T)> = None;
    for (i, d) in candidates.iter().enumerate() {
        let p = model.predict(d, covariates)?;
        let q = p.mean + gamma * p.sd();
        if better(q, d, best.map(|(v, j, _)| (v, &candidates[j])), false) {
            best = Some((q, i, p.mean));
        }
    }
    let (_, i, mean) = best.ok_or_else(|| GpError::InvalidArgument("empty candidate set".into()))?;
    Ok((candidates[i].clone(), mean))
}

/// Plain-EI incumbent: smallest posterior mean over the grid.
pub fn posterior_mean_minimum<T: Scalar>(
    model: &GpModel<T>,
    grid: &[DoseCombination<T>],
    covariates: &Covariates,
) -> Result<(DoseCombination<T>, T), GpError> {
    effective_best(model, grid, covariates, T::zero())
}

/// Grid point maximizing the chosen acquisition, with its value.
pub fn argmax_acquisition<T: Scalar>(
    ctx: &AcquisitionContext<'_, T>,
    kind: AcquisitionKind,
    grid: &[DoseCombination<T>],
) -> Result<(DoseCombination<T>, T), GpError> {
    argmax_by(grid, |d| ctx.value(kind, d))
}

/// Lexicographically tie-broken argmax of an arbitrary score over `grid`.
pub fn argmax_by<T: Scalar>(
    grid: &[DoseCombination<T>],
    mut score: impl FnMut(&DoseCombination<T>) -> Result<T, GpError>,
) -> Result<(DoseCombination<T>, T), GpError> {
    let mut best: Option<(T, usize)> = None;
    for (i, d) in grid.iter().enumerate() {
        let v = score(d)?;
        if better(v, d, best.map(|(bv, j)| (bv, &grid[j])), true) {
            best = Some((v, i));
        }
    }
    let (v, i) = best.ok_or_else(|| GpError::InvalidArgument("empty grid".into()))?;
    Ok((grid[i].clone(), v))
}

/// Lexicographically tie-broken argmin over precomputed values.
pub fn argmin_index<T: Scalar>(grid: &[DoseCombination<T>], values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, d) in grid.iter().enumerate() {
        if better(values[i], d, best.map(|j| (values[j], &grid[j])), false) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Hyperparameters, Observation};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn dose(c: &[f64]) -> DoseCombination {
        DoseCombination(c.to_vec())
    }

    fn grid(steps: usize) -> Vec<DoseCombination> {
        let mut g = Vec::new();
        for i in 0..=steps {
            for j in 0..=steps {
                g.push(dose(&[i as f64 / steps as f64, j as f64 / steps as f64]));
            }
        }
        g
    }

    fn toy_model(seed: u64, tau2: f64) -> GpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let data: Vec<_> = (0..12)
            .map(|i| {
                let d = [((i * 7) % 5) as f64 / 4.0, ((i * 3) % 5) as f64 / 4.0];
                let y = (d[0] - 0.6).powi(2) + (d[1] - 0.3).powi(2) + noise.sample(&mut rng);
                Observation::new(dose(&d), Covariates::none(), y).unwrap()
            })
            .collect();
        GpModel::condition(data, Hyperparameters::new(0.5, tau2, vec![0.4, 0.5], vec![])).unwrap()
    }

    #[test]
    fn ei_examples() {
        assert_abs_diff_eq!(
            expected_improvement_closed(1.0, 1.0, 1.0),
            0.398_942_280_401_432_7,
            epsilon = 1e-15
        );
        assert_eq!(expected_improvement_closed(6.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement_closed(-1.0, 0.0, 1.0), 2.0);
    }

    #[test]
    fn ei_matches_monte_carlo_integration() {
        // E[max(0, f* - X)], X ~ N(mu, sd^2), 10^6 draws
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &(mu, sd, fs) in &[(0.0, 1.0, 0.0_f64), (0.5, 0.3, 0.2), (-1.0, 2.0, 0.5)] {
            let n = Normal::new(mu, sd).unwrap();
            let mc: f64 = (0..1_000_000).map(|_| (fs - n.sample(&mut rng)).max(0.0)).sum::<f64>() / 1e6;
            // improvement has sd below the sd of X, so 4 standard errors is 4 * sd / 1000
            assert_abs_diff_eq!(expected_improvement_closed(mu, sd, fs), mc, epsilon = 4.0 * sd / 1e3);
        }
    }

    #[test]
    fn aei_penalty_examples() {
        assert_eq!(aei_penalty(0.7, 0.0), 1.0);
        assert_abs_diff_eq!(aei_penalty(0.25, 0.5), 1.0 - 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(aei_penalty(0.0, 0.5), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn aei_equals_ei_without_noise_and_shrinks_with_it() {
        let m0 = toy_model(1, 0.0);
        let (ctx, _) =
            AcquisitionContext::at_effective_best(&m0, &grid(4), Covariates::none(), 1.0, NoiseScale::ObservationSd)
                .unwrap();
        for d in grid(4) {
            assert_eq!(
                ctx.expected_improvement(&d).unwrap(),
                ctx.augmented_expected_improvement(&d).unwrap()
            );
        }
        let m = toy_model(1, 0.2);
        let (ctx, _) =
            AcquisitionContext::at_effective_best(&m, &grid(4), Covariates::none(), 1.0, NoiseScale::ObservationSd)
                .unwrap();
        for d in grid(4) {
            let ei = ctx.expected_improvement(&d).unwrap();
            let aei = ctx.augmented_expected_improvement(&d).unwrap();
            assert!(aei <= ei && (ei == 0.0 || aei < ei));
        }
    }

    #[test]
    fn relative_nugget_switch_changes_penalty_scale() {
        let m = toy_model(2, 0.2);
        let h = m.hyperparameters();
        let mk = |s| AcquisitionContext {
            model: &m,
            covariates: Covariates::none(),
            f_star: 0.0,
            gamma: 1.0,
            noise_scale: s,
        };
        assert_abs_diff_eq!(mk(NoiseScale::ObservationSd).noise_sd(), (h.nu * h.tau2).sqrt());
        assert_abs_diff_eq!(mk(NoiseScale::RelativeNugget).noise_sd(), h.tau2.sqrt());
    }

    #[test]
    fn effective_best_edge_cases() {
        let m = toy_model(3, 0.1);
        let only = vec![dose(&[0.25, 0.5])];
        let (d, f) = effective_best(&m, &only, &Covariates::none(), 1.0).unwrap();
        assert_eq!(d, only[0]);
        assert_eq!(f, m.predict(&only[0], &Covariates::none()).unwrap().mean);
        assert!(effective_best(&m, &[], &Covariates::none(), 1.0).is_err());

        // identical candidates tie exactly: the lexicographically smaller wins
        let twins = vec![dose(&[0.5, 0.5]), dose(&[0.5, 0.5])];
        assert_eq!(
            effective_best(&m, &twins, &Covariates::none(), 1.0).unwrap().0,
            twins[0]
        );
        let (d, v) = argmax_by(&[dose(&[0.75, 0.0]), dose(&[0.25, 1.0]), dose(&[0.25, 0.5])], |_| {
            Ok(1.0)
        })
        .unwrap();
        assert_eq!((d, v), (dose(&[0.25, 0.5]), 1.0));
    }

    #[test]
    fn effective_best_matches_exhaustive_scan() {
        let m = toy_model(4, 0.1);
        let g = grid(4);
        for gamma in [0.0, 1.0, 2.0] {
            let scores: Vec<f64> = g
                .iter()
                .map(|d| {
                    let p = m.predict(d, &Covariates::none()).unwrap();
                    p.mean + gamma * p.variance.sqrt()
                })
                .collect();
            let mut bi = 0;
            for i in 1..g.len() {
                if scores[i] < scores[bi] {
                    bi = i;
                }
            }
            let (d, f) = effective_best(&m, &g, &Covariates::none(), gamma).unwrap();
            assert_eq!(d, g[bi]);
            assert_eq!(f, m.predict(&g[bi], &Covariates::none()).unwrap().mean);
        }
        // gamma = 0 is the posterior mean minimizer
        assert_eq!(
            effective_best(&m, &g, &Covariates::none(), 0.0).unwrap(),
            posterior_mean_minimum(&m, &g, &Covariates::none()).unwrap()
        );
    }

    #[test]
    fn argmax_matches_exhaustive_scan_and_is_scale_invariant() {
        for seed in 0..5 {
            let m = toy_model(seed, 0.15);
            let g = grid(16);
            let (ctx, _) =
                AcquisitionContext::at_effective_best(&m, &g, Covariates::none(), 1.0, NoiseScale::ObservationSd)
                    .unwrap();
            let vals: Vec<f64> = g
                .iter()
                .map(|d| ctx.augmented_expected_improvement(d).unwrap())
                .collect();
            let mut bi = 0;
            for i in 1..g.len() {
                if vals[i] > vals[bi] {
                    bi = i;
                }
            }
            let (d, v) = argmax_acquisition(&ctx, AcquisitionKind::Aei, &g).unwrap();
            assert_eq!((&d, v), (&g[bi], vals[bi]));
            let (ds, _) = argmax_by(&g, |x| Ok(ctx.augmented_expected_improvement(x)? * 37.5)).unwrap();
            assert_eq!(ds, d);
        }
        let m = toy_model(0, 0.1);
        let (ctx, _) =
            AcquisitionContext::at_effective_best(&m, &grid(4), Covariates::none(), 1.0, NoiseScale::ObservationSd)
                .unwrap();
        assert!(argmax_acquisition(&ctx, AcquisitionKind::Aei, &[]).is_err());
    }

    #[test]
    fn argmax_picks_dominating_point() {
        let g = grid(4);
        let target = dose(&[0.75, 0.25]);
        let (d, _) = argmax_by(&g, |x| Ok(if *x == target { 5.0 } else { 0.1 })).unwrap();
        assert_eq!(d, target);
    }

    proptest! {
        #[test]
        fn ei_nonnegative_and_monotone_in_sd(mu in -3.0..3.0_f64, fs in -3.0..3.0_f64, s1 in 0.0..3.0_f64, ds in 0.0..2.0_f64) {
            let a = expected_improvement_closed(mu, s1, fs);
            let b = expected_improvement_closed(mu, s1 + ds, fs);
            prop_assert!(a >= 0.0);
            prop_assert!(b >= a - 1e-12);
        }
    }
}
