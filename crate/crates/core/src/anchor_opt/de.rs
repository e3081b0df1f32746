//! Bounded differential evolution (best/1/bin) maximizer.
//!
//! Synchronous generations: every trial of a generation is built from the
//! previous population, so objective evaluations within a generation are
//! independent and the result does not depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AnchorOptError;

/// Search hyperparameters. Population size is population_multiplier · D.
#[derive(Debug, Clone, PartialEq)]
pub struct DEParams {
    pub population_multiplier: usize,
    /// Scale factor F is drawn uniformly from this range once per generation.
    pub mutation: (f64, f64),
    /// Probability a trial coordinate comes from the donor; one coordinate
    /// always does.
    pub crossover: f64,
    pub max_generations: usize,
    /// Stop when (max − min) population fitness ≤ tolerance·|mean fitness|.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for DEParams {
    fn default() -> Self {
        Self {
            population_multiplier: 15,
            mutation: (0.5, 1.0),
            crossover: 0.7,
            max_generations: 100,
            tolerance: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    /// Best population fitness after each generation, entry 0 being the
    /// initial population. Non-decreasing.
    pub history: Vec<f64>,
}

fn validate(bounds: &[(f64, f64)], params: &DEParams) -> Result<(), AnchorOptError> {
    if bounds.is_empty() {
        return Err(AnchorOptError::InvalidBounds("empty bounds".into()));
    }
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(AnchorOptError::InvalidBounds(format!(
                "invalid interval [{lo}, {hi}]"
            )));
        }
    }
    let (m_lo, m_hi) = params.mutation;
    if !(0.0..=2.0).contains(&m_lo) || !(0.0..=2.0).contains(&m_hi) || m_lo > m_hi {
        return Err(AnchorOptError::InvalidParams(format!(
            "mutation range [{m_lo}, {m_hi}] must satisfy 0 ≤ lo ≤ hi ≤ 2"
        )));
    }
    if !(0.0..=1.0).contains(&params.crossover) {
        return Err(AnchorOptError::InvalidParams(format!(
            "crossover probability {} outside [0, 1]",
            params.crossover
        )));
    }
    if params.population_multiplier * bounds.len() < 4 {
        return Err(AnchorOptError::InvalidParams(
            "population size must be at least 4".into(),
        ));
    }
    Ok(())
}

/// Maximize `f` over the box given by `bounds`. `initial_members` are
/// clamped into bounds and placed at the front of the initial population.
/// Fully deterministic for a given seed.
pub fn differential_evolution<F: Fn(&[f64]) -> f64>(
    f: F,
    bounds: &[(f64, f64)],
    initial_members: &[Vec<f64>],
    params: &DEParams,
) -> Result<DeResult, AnchorOptError> {
    validate(bounds, params)?;
    let d = bounds.len();
    let pop_size = params.population_multiplier * d;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut population: Vec<Vec<f64>> = Vec::with_capacity(pop_size);
    for member in initial_members.iter().take(pop_size) {
        assert_eq!(member.len(), d, "initial member dimension mismatch");
        let clamped = member
            .iter()
            .zip(bounds)
            .map(|(&x, &(lo, hi))| x.clamp(lo, hi))
            .collect();
        population.push(clamped);
    }
    while population.len() < pop_size {
        population.push(bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect());
    }
    let mut fitness: Vec<f64> = population.iter().map(|x| f(x)).collect();

    let argmax = |fit: &[f64]| {
        let mut best = 0;
        for i in 1..fit.len() {
            if fit[i] > fit[best] {
                best = i;
            }
        }
        best
    };
    let mut best_idx = argmax(&fitness);
    let mut history = vec![fitness[best_idx]];

    for _gen in 0..params.max_generations {
        let (m_lo, m_hi) = params.mutation;
        let f_scale = if m_lo == m_hi { m_lo } else { rng.gen_range(m_lo..m_hi) };
        let best = population[best_idx].clone();

        let mut next_pop = population.clone();
        let mut next_fit = fitness.clone();
        for i in 0..pop_size {
            let a = loop {
                let j = rng.gen_range(0..pop_size);
                if j != i {
                    break j;
                }
            };
            let b = loop {
                let j = rng.gen_range(0..pop_size);
                if j != i && j != a {
                    break j;
                }
            };
            let j_rand = rng.gen_range(0..d);
            let mut trial = population[i].clone();
            for dim in 0..d {
                let cross = rng.gen_range(0.0..1.0) < params.crossover || dim == j_rand;
                if cross {
                    let (lo, hi) = bounds[dim];
                    let mut v = best[dim] + f_scale * (population[a][dim] - population[b][dim]);
                    if v < lo || v > hi {
                        v = rng.gen_range(lo..hi);
                    }
                    trial[dim] = v;
                }
            }
            let trial_fit = f(&trial);
            if trial_fit >= fitness[i] {
                next_pop[i] = trial;
                next_fit[i] = trial_fit;
            }
        }
        population = next_pop;
        fitness = next_fit;
        best_idx = argmax(&fitness);
        history.push(fitness[best_idx]);

        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &v in &fitness {
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        if hi - lo <= params.tolerance * (sum / pop_size as f64).abs() {
            break;
        }
    }

    Ok(DeResult {
        best_x: population[best_idx].clone(),
        best_value: fitness[best_idx],
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sphere(x: &[f64]) -> f64 {
        -x.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn maximizes_negative_sphere_2d() {
        let params = DEParams { seed: 3, tolerance: 0.0, ..DEParams::default() };
        let r = differential_evolution(sphere, &[(-5.0, 5.0); 2], &[], &params).unwrap();
        assert!(r.best_value >= -1e-6, "best {}", r.best_value);
        assert!(r.best_x.iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn maximizes_shifted_parabola_1d() {
        let params = DEParams { seed: 5, tolerance: 0.0, ..DEParams::default() };
        let r =
            differential_evolution(|x| -(x[0] - 2.0) * (x[0] - 2.0), &[(0.0, 5.0)], &[], &params)
                .unwrap();
        assert!((r.best_x[0] - 2.0).abs() < 1e-3, "argmax {}", r.best_x[0]);
    }

    #[test]
    fn same_seed_gives_identical_history() {
        let params = DEParams { seed: 11, max_generations: 30, ..DEParams::default() };
        let a = differential_evolution(sphere, &[(-5.0, 5.0); 3], &[], &params).unwrap();
        let b = differential_evolution(sphere, &[(-5.0, 5.0); 3], &[], &params).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best_x, b.best_x);
    }

    #[test]
    fn constant_fitness_terminates_after_one_generation() {
        let params = DEParams { seed: 0, ..DEParams::default() };
        let r = differential_evolution(|_| 0.25, &[(0.0, 1.0); 2], &[], &params).unwrap();
        assert_eq!(r.history, vec![0.25, 0.25]);
    }

    #[test]
    fn initial_member_is_used_and_clamped() {
        // objective peaks at a corner the random init is unlikely to hit in 0 gens
        let params = DEParams { seed: 9, max_generations: 0, ..DEParams::default() };
        let member = vec![7.0, 7.0]; // clamps to (5, 5)
        let r = differential_evolution(
            |x| x.iter().sum::<f64>(),
            &[(-5.0, 5.0); 2],
            &[member],
            &params,
        )
        .unwrap();
        assert_eq!(r.best_x, vec![5.0, 5.0]);
        assert_eq!(r.best_value, 10.0);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let p = DEParams::default();
        assert!(matches!(
            differential_evolution(sphere, &[(1.0, 1.0)], &[], &p),
            Err(AnchorOptError::InvalidBounds(_))
        ));
        assert!(matches!(
            differential_evolution(sphere, &[], &[], &p),
            Err(AnchorOptError::InvalidBounds(_))
        ));
        let bad_cr = DEParams { crossover: 1.5, ..DEParams::default() };
        assert!(matches!(
            differential_evolution(sphere, &[(0.0, 1.0)], &[], &bad_cr),
            Err(AnchorOptError::InvalidParams(_))
        ));
        let bad_f = DEParams { mutation: (0.5, 2.5), ..DEParams::default() };
        assert!(matches!(
            differential_evolution(sphere, &[(0.0, 1.0)], &[], &bad_f),
            Err(AnchorOptError::InvalidParams(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn history_monotone_and_bounded(seed in any::<u64>()) {
            let params = DEParams { seed, max_generations: 25, ..DEParams::default() };
            let bounds = [(-3.0, 4.0), (-2.0, 2.0), (0.5, 9.0)];
            let r = differential_evolution(sphere, &bounds, &[], &params).unwrap();
            prop_assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(r.history.len() <= 26);
            prop_assert_eq!(*r.history.last().unwrap(), r.best_value);
            for (v, (lo, hi)) in r.best_x.iter().zip(bounds.iter()) {
                prop_assert!(v >= lo && v <= hi);
            }
        }
    }
}
