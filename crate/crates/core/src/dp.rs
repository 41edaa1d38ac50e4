//! κ-ary randomized response, privacy parameters and the de-biased sum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `γ = κ / (κ − 1 + e^ε)`, the mixing weight that makes randomized response
/// ε-LDP.
pub fn gamma_from_epsilon(kappa: u64, epsilon: f64) -> Result<f64> {
    if kappa < 2 {
        return Err(Error::Domain(format!("kappa must be at least 2, got {kappa}")));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let k = kappa as f64;
    Ok(k / (k - 1.0 + epsilon.exp()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomizerConfig {
    pub kappa: u64,
    pub gamma: f64,
    /// Set when `gamma` was derived from a privacy target.
    pub epsilon: Option<f64>,
}

impl RandomizerConfig {
    pub fn from_gamma(kappa: u64, gamma: f64) -> Result<Self> {
        if kappa < 2 {
            return Err(Error::Domain(format!("kappa must be at least 2, got {kappa}")));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Domain(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        Ok(RandomizerConfig {
            kappa,
            gamma,
            epsilon: None,
        })
    }

    pub fn from_epsilon(kappa: u64, epsilon: f64) -> Result<Self> {
        let gamma = gamma_from_epsilon(kappa, epsilon)?;
        Ok(RandomizerConfig {
            kappa,
            gamma,
            epsilon: Some(epsilon),
        })
    }

    /// `Pr[y = x] = 1 − (κ−1)γ/κ`.
    pub fn keep_probability(&self) -> f64 {
        1.0 - (self.kappa as f64 - 1.0) * self.gamma / self.kappa as f64
    }

    fn check_input(&self, x: u64) -> Result<()> {
        if x >= self.kappa {
            return Err(Error::Domain(format!(
                "input {x} outside [0, {})",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// One draw of the randomizer. Consumes a Bernoulli(γ) draw and then, only
/// if it fired, a uniform draw on `[0, κ)`.
pub fn randomize<R: Rng + ?Sized>(x: u64, cfg: &RandomizerConfig, rng: &mut R) -> Result<u64> {
    cfg.check_input(x)?;
    if rng.random_bool(cfg.gamma) {
        Ok(rng.random_range(0..cfg.kappa))
    } else {
        Ok(x)
    }
}

/// `Pr[y | x]` for every `y`.
pub fn exact_distribution(x: u64, cfg: &RandomizerConfig) -> Result<Vec<f64>> {
    cfg.check_input(x)?;
    let k = cfg.kappa as f64;
    let mut p = vec![cfg.gamma / k; cfg.kappa as usize];
    p[x as usize] += 1.0 - cfg.gamma;
    Ok(p)
}

/// Largest `Pr[y|x] / Pr[y|x']` over all inputs and outputs.
pub fn max_likelihood_ratio(cfg: &RandomizerConfig) -> Result<f64> {
    let rows: Vec<Vec<f64>> = (0..cfg.kappa)
        .map(|x| exact_distribution(x, cfg))
        .collect::<Result<_>>()?;
    let mut worst: f64 = 1.0;
    for a in &rows {
        for b in &rows {
            for (pa, pb) in a.iter().zip(b) {
                if *pa > 0.0 {
                    worst = worst.max(if *pb > 0.0 { pa / pb } else { f64::INFINITY });
                }
            }
        }
    }
    Ok(worst)
}

/// `(Σy − γ(κ−1)n/2) / (1 − γ)`.
pub fn debias(sum_y: u64, n: u64, kappa: u64, gamma: f64) -> Result<f64> {
    if gamma >= 1.0 {
        return Err(Error::Domain(
            "the de-biased sum is undefined for gamma = 1".into(),
        ));
    }
    if sum_y > (kappa - 1) * n {
        return Err(Error::Domain(format!(
            "sum {sum_y} exceeds the maximum (kappa-1)n = {}",
            (kappa - 1) * n
        )));
    }
    let shift = gamma * (kappa as f64 - 1.0) * n as f64 / 2.0;
    Ok((sum_y as f64 - shift) / (1.0 - gamma))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub invocations: u64,
}

impl PrivacyBudget {
    /// Total `(tε, tδ)` after `t` adaptive invocations.
    pub fn compose(&self) -> Result<(f64, f64)> {
        if self.invocations == 0 {
            return Err(Error::Domain("composition needs at least one invocation".into()));
        }
        let t = self.invocations as f64;
        Ok((t * self.epsilon, t * self.delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gamma_examples() {
        assert_relative_eq!(gamma_from_epsilon(2, 0.0).unwrap(), 1.0);
        assert_relative_eq!(gamma_from_epsilon(2, 3f64.ln()).unwrap(), 0.5, epsilon = 1e-15);
        assert!(gamma_from_epsilon(10, 800.0).unwrap() < 1e-300);
        assert!(matches!(gamma_from_epsilon(1, 1.0), Err(Error::Domain(_))));
        let mut last = 2.0;
        for e in 0..50 {
            let g = gamma_from_epsilon(5, e as f64 * 0.2).unwrap();
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn randomize_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = RandomizerConfig::from_gamma(4, 0.0).unwrap();
        for x in 0..4 {
            for _ in 0..100 {
                assert_eq!(randomize(x, &cfg, &mut rng).unwrap(), x);
            }
        }
        let cfg = RandomizerConfig::from_gamma(2, 1.0).unwrap();
        let ones = (0..10_000)
            .filter(|_| randomize(0, &cfg, &mut rng).unwrap() == 1)
            .count();
        assert!((4800..5200).contains(&ones), "{ones}");
        assert!(matches!(randomize(2, &cfg, &mut rng), Err(Error::Domain(_))));
        assert!(RandomizerConfig::from_gamma(2, 1.5).is_err());
    }

    #[test]
    fn keep_probability_half_gamma() {
        let cfg = RandomizerConfig::from_gamma(2, 0.5).unwrap();
        assert_relative_eq!(cfg.keep_probability(), 0.75);
        assert_relative_eq!(exact_distribution(0, &cfg).unwrap()[0], 0.75);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trials = 100_000;
        let kept = (0..trials)
            .filter(|_| randomize(0, &cfg, &mut rng).unwrap() == 0)
            .count() as f64;
        let sigma = (0.75 * 0.25 / trials as f64).sqrt();
        assert!((kept / trials as f64 - 0.75).abs() < 4.0 * sigma);
    }

    #[test]
    fn debias_examples() {
        assert_relative_eq!(debias(7, 10, 2, 0.0).unwrap(), 7.0);
        assert_relative_eq!(debias(3, 4, 2, 0.5).unwrap(), 4.0);
        assert!(matches!(debias(3, 4, 2, 1.0), Err(Error::Domain(_))));
        assert!(matches!(debias(5, 4, 2, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn debias_is_unbiased() {
        let cfg = RandomizerConfig::from_gamma(3, 0.5).unwrap();
        let xs: Vec<u64> = (0..20).map(|i| i % 3).collect();
        let truth: u64 = xs.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 100_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..trials {
            let s: u64 = xs.iter().map(|&x| randomize(x, &cfg, &mut rng).unwrap()).sum();
            let e = debias(s, 20, 3, 0.5).unwrap();
            acc += e;
            acc2 += e * e;
        }
        let mean = acc / trials as f64;
        let se = ((acc2 / trials as f64 - mean * mean) / trials as f64).sqrt();
        assert!((mean - truth as f64).abs() < 3.0 * se, "{mean} vs {truth}");
    }

    #[test]
    fn compose_examples() {
        let b = PrivacyBudget { epsilon: 0.1, delta: 1e-6, invocations: 1 };
        assert_eq!(b.compose().unwrap(), (0.1, 1e-6));
        let b = PrivacyBudget { epsilon: 0.1, delta: 0.0, invocations: 10 };
        let (e, dl) = b.compose().unwrap();
        assert_relative_eq!(e, 1.0, epsilon = 1e-12);
        assert_eq!(dl, 0.0);
        let b = PrivacyBudget { epsilon: 1.0032, delta: 1e-6, invocations: 3 };
        let (e, dl) = b.compose().unwrap();
        assert_relative_eq!(e, 3.0096, epsilon = 1e-12);
        assert_relative_eq!(dl, 3e-6, epsilon = 1e-18);
        let b = PrivacyBudget { epsilon: 1.0, delta: 0.0, invocations: 0 };
        assert!(b.compose().is_err());
    }

    #[test]
    fn ldp_ratio_bound() {
        for kappa in 2..=5 {
            for eps in [0.5, 1.0, 2.0] {
                let cfg = RandomizerConfig::from_epsilon(kappa, eps).unwrap();
                let r = max_likelihood_ratio(&cfg).unwrap();
                assert!(r <= eps.exp() + 1e-9, "kappa={kappa} eps={eps}: {r}");
                // The bound is tight.
                assert!((r - eps.exp()).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn debias_is_linear(a in 0u64..50, b in 0u64..50, gamma in 0.0f64..0.99) {
            let n = 50;
            let e0 = debias(0, n, 3, gamma).unwrap();
            let ea = debias(a, n, 3, gamma).unwrap();
            let eb = debias(b, n, 3, gamma).unwrap();
            let eab = debias(a + b, n, 3, gamma).unwrap();
            prop_assert!((eab - (ea + eb - e0)).abs() < 1e-9 * (1.0 + eab.abs()));
        }

        #[test]
        fn exact_distribution_sums_to_one(kappa in 2u64..12, x in 0u64..12, gamma in 0.0f64..=1.0) {
            prop_assume!(x < kappa);
            let cfg = RandomizerConfig::from_gamma(kappa, gamma).unwrap();
            let total: f64 = exact_distribution(x, &cfg).unwrap().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
