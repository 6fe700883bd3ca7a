//! Samplers for binary quadratic models: exact enumeration for small
//! problems and multi-restart simulated annealing for everything else.
//!
//! Both samplers are deterministic functions of their inputs; annealing
//! randomness flows exclusively from caller-provided seeds through
//! counter-based ChaCha streams, so results reproduce bit-for-bit across
//! runs and thread schedules.

use crate::qubo::Qubo;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Deterministic RNG for a `(seed, stream)` pair.
///
/// Distinct streams under one seed are independent, which lets parallel
/// restarts share a seed without sharing state.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Errors raised by the samplers.
#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("exact enumeration over {num_vars} variables exceeds the limit of {max_vars}")]
    ProblemTooLarge { num_vars: usize, max_vars: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// One sampled configuration with its exactly re-evaluated energy.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    /// Variable values, indexed by model variable id.
    pub bits: Vec<bool>,
    /// Energy of `bits`, computed by a full model evaluation.
    pub energy: f64,
    /// Index of the restart that produced this sample (0 for exact search).
    pub restart_index: usize,
}

/// Exhaustive minimization by a Gray-code walk.
///
/// Visits all `2^n` configurations, each reached from the previous one by a
/// single flip so the energy update costs one neighborhood scan. Candidate
/// minima are confirmed by full re-evaluation, which also resynchronizes
/// the running energy. Exact energy ties are broken toward the
/// lexicographically smallest bit vector. `max_vars` caps the search size.
pub fn solve_exact(qubo: &Qubo, max_vars: usize) -> Result<SampleResult, SolveError> {
    let n = qubo.num_vars;
    if n > max_vars {
        return Err(SolveError::ProblemTooLarge {
            num_vars: n,
            max_vars,
        });
    }
    let mut bits = vec![false; n];
    let mut energy = qubo.evaluate(&bits);
    let mut best_bits = bits.clone();
    let mut best_energy = energy;
    let total: u64 = 1u64 << n;
    for step in 1..total {
        let var = step.trailing_zeros() as usize;
        energy += qubo.flip_delta(&bits, var);
        bits[var] = !bits[var];
        if energy <= best_energy {
            // Confirm with an exact evaluation before accepting; this also
            // clears any drift accumulated by the incremental updates.
            let exact = qubo.evaluate(&bits);
            energy = exact;
            if exact < best_energy
                || (exact == best_energy && lex_less(&bits, &best_bits))
            {
                best_energy = exact;
                best_bits.copy_from_slice(&bits);
            }
        }
    }
    Ok(SampleResult {
        bits: best_bits,
        energy: best_energy,
        restart_index: 0,
    })
}

fn lex_less(a: &[bool], b: &[bool]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return !x;
        }
    }
    false
}

/// Simulated-annealing parameters.
#[derive(Debug, Clone)]
pub struct SaParams {
    /// Independent restarts, run in parallel and merged deterministically.
    pub restarts: usize,
    /// Full sweeps (one proposed flip per variable) per restart.
    pub sweeps: usize,
    /// Initial inverse temperature; derived from the coefficient scale when
    /// unset.
    pub beta0: Option<f64>,
    /// Final inverse temperature; derived from the smallest nonzero
    /// coefficient when unset.
    pub beta1: Option<f64>,
    /// Base RNG seed; restart `r` uses stream `r` of this seed.
    pub seed: u64,
}

impl Default for SaParams {
    fn default() -> Self {
        Self {
            restarts: 16,
            sweeps: 1000,
            beta0: None,
            beta1: None,
            seed: 0,
        }
    }
}

impl SaParams {
    /// Parameters with the given seed and defaults elsewhere.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Resolved inverse-temperature schedule endpoints for a model.
///
/// The defaults aim the start at an acceptance-friendly scale (0.1 divided
/// by the mean absolute coefficient) and the end at a freezing scale (10
/// divided by the smallest nonzero absolute coefficient).
pub fn default_betas(qubo: &Qubo) -> (f64, f64) {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut min_nonzero = f64::INFINITY;
    for &c in qubo
        .linear
        .iter()
        .chain(qubo.quadratic.values())
    {
        if c != 0.0 {
            sum += c.abs();
            count += 1;
            min_nonzero = min_nonzero.min(c.abs());
        }
    }
    if count == 0 {
        return (0.1, 10.0);
    }
    (0.1 / (sum / count as f64), 10.0 / min_nonzero)
}

/// Multi-restart simulated annealing.
///
/// Each restart walks `sweeps` shuffled sweeps under a geometric inverse-
/// temperature ramp, tracks the best configuration it sees, and reports it
/// after a full re-evaluation. Restarts run in parallel but merge by
/// `(energy, restart_index)`, so the returned order — best first — is
/// independent of thread scheduling.
pub fn solve_sa(qubo: &Qubo, params: &SaParams) -> Result<Vec<SampleResult>, SolveError> {
    if params.restarts == 0 {
        return Err(SolveError::InvalidParameter("restarts must be >= 1".into()));
    }
    if params.sweeps == 0 {
        return Err(SolveError::InvalidParameter("sweeps must be >= 1".into()));
    }
    let (b0, b1) = {
        let (d0, d1) = default_betas(qubo);
        (params.beta0.unwrap_or(d0), params.beta1.unwrap_or(d1))
    };
    if !(b0 > 0.0) || !(b1 > 0.0) {
        return Err(SolveError::InvalidParameter(
            "inverse temperatures must be positive".into(),
        ));
    }
    let n = qubo.num_vars;
    if n == 0 {
        return Ok(vec![SampleResult {
            bits: Vec::new(),
            energy: qubo.offset,
            restart_index: 0,
        }]);
    }
    let sweeps = params.sweeps;
    // Geometric ramp beta0 -> beta1 across sweeps.
    let betas: Vec<f64> = (0..sweeps)
        .map(|t| {
            if sweeps == 1 {
                b1
            } else {
                b0 * (b1 / b0).powf(t as f64 / (sweeps - 1) as f64)
            }
        })
        .collect();
    let mut results: Vec<SampleResult> = (0..params.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = seeded_rng(params.seed, restart as u64);
            let mut bits: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
            let mut energy = qubo.evaluate(&bits);
            let mut best_bits = bits.clone();
            let mut best_energy = energy;
            let mut order: Vec<usize> = (0..n).collect();
            for &beta in &betas {
                shuffle(&mut order, &mut rng);
                for &var in &order {
                    let delta = qubo.flip_delta(&bits, var);
                    if delta <= 0.0 || rng.gen::<f64>() < (-beta * delta).exp() {
                        bits[var] = !bits[var];
                        energy += delta;
                        if energy < best_energy {
                            best_energy = energy;
                            best_bits.copy_from_slice(&bits);
                        }
                    }
                }
            }
            let energy = qubo.evaluate(&best_bits);
            SampleResult {
                bits: best_bits,
                energy,
                restart_index: restart,
            }
        })
        .collect();
    results.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then(a.restart_index.cmp(&b.restart_index))
    });
    Ok(results)
}

/// Fisher-Yates shuffle driven by the caller's RNG.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn toy_qubo() -> Qubo {
        // E(x) = 1 + x0 - 2 x1 + 3 x0 x1:
        // 00 -> 1, 10 -> 2, 01 -> -1, 11 -> 3.
        Qubo::new(
            2,
            vec![1.0, -2.0],
            BTreeMap::from([((0, 1), 3.0)]),
            1.0,
        )
    }

    fn random_qubo(n: usize, seed: u64) -> Qubo {
        let mut rng = seeded_rng(seed, 7);
        let linear: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mut quadratic = BTreeMap::new();
        for i in 0..n as u32 {
            for j in (i + 1)..n as u32 {
                if rng.gen::<f64>() < 0.6 {
                    quadratic.insert((i, j), rng.gen_range(-5.0..5.0));
                }
            }
        }
        Qubo::new(n, linear, quadratic, rng.gen_range(-1.0..1.0))
    }

    fn brute_force(qubo: &Qubo) -> (Vec<bool>, f64) {
        let n = qubo.num_vars;
        let mut best: Option<(Vec<bool>, f64)> = None;
        for mask in 0..(1u64 << n) {
            let bits: Vec<bool> = (0..n).map(|i| (mask >> i) & 1 == 1).collect();
            let e = qubo.evaluate(&bits);
            let better = match &best {
                None => true,
                Some((bbits, be)) => e < *be || (e == *be && lex_less(&bits, bbits)),
            };
            if better {
                best = Some((bits, e));
            }
        }
        best.unwrap()
    }

    #[test]
    fn seeded_rng_is_reproducible_and_stream_separated() {
        let a: Vec<u64> = (0..4).map(|_| seeded_rng(9, 0).gen()).collect();
        let b: Vec<u64> = (0..4).map(|_| seeded_rng(9, 0).gen()).collect();
        assert_eq!(a, b);
        let mut r0 = seeded_rng(9, 0);
        let mut r1 = seeded_rng(9, 1);
        assert_ne!(r0.gen::<u64>(), r1.gen::<u64>());
    }

    #[test]
    fn exact_finds_minimum_of_toy_model() {
        let result = solve_exact(&toy_qubo(), 24).unwrap();
        assert_eq!(result.bits, vec![false, true]);
        assert_eq!(result.energy, -1.0);
    }

    #[test]
    fn exact_breaks_ties_lexicographically() {
        let qubo = Qubo::new(3, vec![0.0; 3], BTreeMap::new(), 2.5);
        let result = solve_exact(&qubo, 24).unwrap();
        assert_eq!(result.bits, vec![false, false, false]);
        assert_eq!(result.energy, 2.5);
    }

    #[test]
    fn exact_rejects_oversized_problems() {
        let qubo = Qubo::new(30, vec![0.0; 30], BTreeMap::new(), 0.0);
        assert!(matches!(
            solve_exact(&qubo, 24),
            Err(SolveError::ProblemTooLarge { num_vars: 30, max_vars: 24 })
        ));
    }

    #[test]
    fn exact_matches_brute_force_on_random_models() {
        for seed in 0..5 {
            let qubo = random_qubo(10, seed);
            let result = solve_exact(&qubo, 24).unwrap();
            let (bits, energy) = brute_force(&qubo);
            assert_eq!(result.energy, energy, "seed {seed}");
            assert_eq!(result.bits, bits, "seed {seed}");
        }
    }

    #[test]
    fn exact_handles_empty_model() {
        let qubo = Qubo::new(0, Vec::new(), BTreeMap::new(), 4.25);
        let result = solve_exact(&qubo, 24).unwrap();
        assert!(result.bits.is_empty());
        assert_eq!(result.energy, 4.25);
    }

    #[test]
    fn annealer_reaches_exact_optimum_on_small_models() {
        for seed in 0..3 {
            let qubo = random_qubo(12, 100 + seed);
            let exact = solve_exact(&qubo, 24).unwrap();
            let params = SaParams {
                restarts: 8,
                sweeps: 300,
                seed: 11,
                ..SaParams::default()
            };
            let samples = solve_sa(&qubo, &params).unwrap();
            assert!(
                (samples[0].energy - exact.energy).abs() < 1e-9,
                "seed {seed}: sa {} vs exact {}",
                samples[0].energy,
                exact.energy
            );
        }
    }

    #[test]
    fn annealer_is_deterministic() {
        let qubo = random_qubo(16, 5);
        let params = SaParams {
            restarts: 6,
            sweeps: 100,
            seed: 3,
            ..SaParams::default()
        };
        let a = solve_sa(&qubo, &params).unwrap();
        let b = solve_sa(&qubo, &params).unwrap();
        assert_eq!(a, b);
        // Best-first merge order.
        for w in a.windows(2) {
            assert!(w[0].energy <= w[1].energy);
        }
    }

    #[test]
    fn annealer_rejects_degenerate_parameters() {
        let qubo = toy_qubo();
        let mut params = SaParams::default();
        params.restarts = 0;
        assert!(solve_sa(&qubo, &params).is_err());
        let mut params = SaParams::default();
        params.sweeps = 0;
        assert!(solve_sa(&qubo, &params).is_err());
    }

    #[test]
    fn default_betas_use_coefficient_scale() {
        // Coefficients 1, -2, 3: mean 2, min 1.
        let (b0, b1) = default_betas(&toy_qubo());
        assert!((b0 - 0.05).abs() < 1e-12);
        assert!((b1 - 10.0).abs() < 1e-12);
        // All-zero model falls back to fixed endpoints.
        let zero = Qubo::new(2, vec![0.0; 2], BTreeMap::new(), 0.0);
        assert_eq!(default_betas(&zero), (0.1, 10.0));
    }
}
