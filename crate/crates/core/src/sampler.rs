//! Simulated parallel sampling: mixing-time-thinned exploratory rollouts
//! that fill a bucket of successor samples for every state-action pair.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bounds::lemma4_min_explore_samples;
use crate::data::sample_action;
use crate::error::{Error, Result};
use crate::mdp::{StochasticPolicy, TabularMdp};

/// Successor samples per state-action pair, gathered by thinned rollouts.
#[derive(Debug, Clone)]
pub struct ParallelSamples {
    num_states: usize,
    num_actions: usize,
    /// `samples[s * A + a]` holds the sampled next states for `(s, a)`.
    samples: Vec<Vec<usize>>,
    pub thinning_period: usize,
    pub raw_steps_consumed: usize,
}

impl ParallelSamples {
    /// Wrap explicit per-pair successor buckets (`buckets[s * A + a]`).
    pub fn from_buckets(
        num_states: usize,
        num_actions: usize,
        buckets: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if buckets.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch(format!(
                "{} buckets for S*A = {}",
                buckets.len(),
                num_states * num_actions
            )));
        }
        if buckets.iter().flatten().any(|&s2| s2 >= num_states) {
            return Err(Error::DimensionMismatch(
                "bucket successor out of range".into(),
            ));
        }
        Ok(Self {
            num_states,
            num_actions,
            samples: buckets,
            thinning_period: 0,
            raw_steps_consumed: 0,
        })
    }

    /// Group a transition dataset's successors by `(s, a)` and shuffle each
    /// bucket under a derived seed, so phase slices consume an exchangeable
    /// order rather than trajectory order.
    pub fn from_dataset(d: &crate::data::TransitionDataset, seed: u64) -> Result<Self> {
        use rand::seq::SliceRandom;
        let s_n = d.num_states;
        let a_n = d.num_actions;
        let mut buckets = vec![Vec::new(); s_n * a_n];
        for rec in d.records() {
            buckets[rec.state * a_n + rec.action].push(rec.next_state);
        }
        for (i, bucket) in buckets.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::seeds::derive_seed(
                seed,
                "bucket-shuffle",
                i as u64,
            ));
            bucket.shuffle(&mut rng);
        }
        Self::from_buckets(s_n, a_n, buckets)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn bucket(&self, s: usize, a: usize) -> &[usize] {
        &self.samples[s * self.num_actions + a]
    }

    pub fn per_pair_count(&self) -> usize {
        self.samples.iter().map(Vec::len).min().unwrap_or(0)
    }
}

/// Thinning period `T = ceil(t_mix * log(2 / p_min) / log 2)`.
pub fn thinning_period(t_mix: usize, p_min: f64) -> usize {
    ((t_mix as f64) * (2.0 / p_min).ln() / 2f64.ln()).ceil() as usize
}

/// The default raw-step budget: three times the expected-coverage bound,
/// scaled by the requested bucket depth.
pub fn default_step_budget(
    t_mix: usize,
    p_min: f64,
    num_states: usize,
    num_actions: usize,
    delta2: f64,
    per_pair_count: usize,
) -> usize {
    let one_pass = lemma4_min_explore_samples(t_mix, p_min, num_states, num_actions, delta2);
    (3.0 * one_pass * per_pair_count as f64).ceil() as usize
}

/// Roll out the exploratory policy, keep every `T`-th state-action pair
/// after a burn-in of `T` steps, and deposit each thinned `(s, a, s')` into
/// its bucket until every bucket holds `per_pair_count` samples.
///
/// `budget` caps the raw steps consumed; `None` uses the default budget at
/// failure probability `delta2`. Running out of budget before coverage is a
/// `CoverageFailure`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_parallel_sampler(
    mdp: &TabularMdp,
    explore: &StochasticPolicy,
    per_pair_count: usize,
    p_min: f64,
    t_mix: usize,
    delta2: f64,
    seed: u64,
    budget: Option<usize>,
) -> Result<ParallelSamples> {
    if p_min <= 0.0 {
        return Err(Error::InvalidArgument(
            "exploratory policy must cover all pairs (p_min > 0)".into(),
        ));
    }
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    let period = thinning_period(t_mix, p_min);
    let budget = budget
        .unwrap_or_else(|| default_step_budget(t_mix, p_min, s_n, a_n, delta2, per_pair_count));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = vec![Vec::with_capacity(per_pair_count); s_n * a_n];
    let mut unfilled = s_n * a_n;
    if per_pair_count == 0 {
        unfilled = 0;
    }

    let mut s = {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut idx = s_n - 1;
        for (i, &p) in mdp.initial_dist().iter().enumerate() {
            acc += p;
            if u < acc {
                idx = i;
                break;
            }
        }
        idx
    };
    let mut steps = 0usize;
    let mut since_thin = 0usize; // counts up to the burn-in/thinning period
    while unfilled > 0 && steps < budget {
        let a = sample_action(explore, s, a_n, &mut rng);
        let s2 = {
            let u: f64 = rng.gen();
            let row = mdp.transition_row(s, a);
            let mut acc = 0.0;
            let mut idx = s_n - 1;
            for (i, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    idx = i;
                    break;
                }
            }
            idx
        };
        steps += 1;
        since_thin += 1;
        if since_thin >= period {
            since_thin = 0;
            let bucket = &mut samples[s * a_n + a];
            if bucket.len() < per_pair_count {
                bucket.push(s2);
                if bucket.len() == per_pair_count {
                    unfilled -= 1;
                }
            }
        }
        s = s2;
    }
    if unfilled > 0 {
        return Err(Error::CoverageFailure {
            budget,
            uncovered: unfilled,
        });
    }
    Ok(ParallelSamples {
        num_states: s_n,
        num_actions: a_n,
        samples,
        thinning_period: period,
        raw_steps_consumed: steps,
    })
}
