//! Imitation learning by batch RL: label the unified dataset with the
//! expert-membership indicator reward, then run an offline solver once.

use serde::{Deserialize, Serialize};

use crate::chain::{average_reward, steady_state, tv_distance};
use crate::data::TransitionDataset;
use crate::error::{Error, Result};
use crate::mdp::{DeterministicPolicy, PolicyLike, TabularMdp};

/// The indicator reward: 1 iff `(s, a)` appears in the expert dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicReward {
    table: Vec<f64>,
    num_actions: usize,
}

impl IntrinsicReward {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.table[s * self.num_actions + a]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Wrap an explicit `S x A` indicator table (row-major).
    pub fn from_table(table: Vec<f64>, num_actions: usize) -> Self {
        Self { table, num_actions }
    }

    /// Indicator over the expert policy's own pairs, one per state. The
    /// idealised labelling a fully covering expert dataset converges to.
    pub fn from_policy(expert: &DeterministicPolicy, num_states: usize, num_actions: usize) -> Self {
        let mut table = vec![0.0; num_states * num_actions];
        for s in 0..num_states {
            table[s * num_actions + expert.action(s)] = 1.0;
        }
        Self { table, num_actions }
    }
}

/// Set-membership indicator over the `(s, a)` pairs of the expert dataset.
pub fn intrinsic_reward(
    d_e: &TransitionDataset,
    num_states: usize,
    num_actions: usize,
) -> Result<IntrinsicReward> {
    let mut table = vec![0.0; num_states * num_actions];
    for (s, a) in d_e.state_action_pairs() {
        if s >= num_states || a >= num_actions {
            return Err(Error::DimensionMismatch(format!(
                "expert pair ({s}, {a}) out of range for S={num_states}, A={num_actions}"
            )));
        }
        table[s * num_actions + a] = 1.0;
    }
    Ok(IntrinsicReward { table, num_actions })
}

/// An offline RL procedure mapping a labelled dataset to a policy. The
/// labelling loop is solver-agnostic; phased Q-learning is the default.
pub trait OfflineSolver {
    fn solve(
        &self,
        d_u: &TransitionDataset,
        reward: &IntrinsicReward,
    ) -> Result<DeterministicPolicy>;
}

impl<F> OfflineSolver for F
where
    F: Fn(&TransitionDataset, &IntrinsicReward) -> Result<DeterministicPolicy>,
{
    fn solve(
        &self,
        d_u: &TransitionDataset,
        reward: &IntrinsicReward,
    ) -> Result<DeterministicPolicy> {
        self(d_u, reward)
    }
}

/// The default offline solver: group the dataset's transitions into
/// per-pair buckets, then run sliced phased Q-learning on the labelled
/// reward at discount `gamma` for `ell` phases. The bucket depth per phase
/// is the largest `m` with `m * ell` samples available at every pair.
pub fn phased_q_dataset_solver(
    d_u: &TransitionDataset,
    reward: &IntrinsicReward,
    gamma: f64,
    ell: usize,
    seed: u64,
) -> Result<DeterministicPolicy> {
    let samples = crate::sampler::ParallelSamples::from_dataset(d_u, seed)?;
    let m = samples.per_pair_count() / ell;
    if m == 0 {
        return Err(crate::error::Error::InfeasibleParameters(format!(
            "dataset holds only {} samples at its thinnest pair; need at least ell = {ell}",
            samples.per_pair_count()
        )));
    }
    let run = crate::phased_q::phased_q_learn(
        crate::phased_q::SampleSource::Buckets {
            samples: &samples,
            m,
        },
        reward.table(),
        gamma,
        ell,
        None,
    )?;
    Ok(run.policy)
}

/// Label `D_E ∪ D_X` with the intrinsic reward and invoke the solver.
pub fn run_ilbrl<S: OfflineSolver + ?Sized>(
    d_e: &TransitionDataset,
    d_x: &TransitionDataset,
    solver: &S,
) -> Result<DeterministicPolicy> {
    let d_u = crate::data::merge(d_e, d_x)?;
    let reward = intrinsic_reward(d_e, d_u.num_states, d_u.num_actions)?;
    solver.solve(&d_u, &reward)
}

/// `mu_int = sum_s rho_pi(s) r_hat(s, pi(s))`; one minus this is the
/// intrinsic suboptimality of the policy.
pub fn intrinsic_average_reward<P: PolicyLike + ?Sized>(
    mdp: &TabularMdp,
    policy: &P,
    reward: &IntrinsicReward,
) -> Result<f64> {
    let chain = mdp.induced_chain(policy);
    let rho = steady_state(&chain)?;
    Ok((0..mdp.num_states())
        .map(|s| {
            rho[s]
                * (0..mdp.num_actions())
                    .map(|a| policy.prob(s, a) * reward.get(s, a))
                    .sum::<f64>()
        })
        .sum())
}

/// Per-step imitation regret `mu_expert - mu_imitator` under the true
/// reward.
pub fn imitation_regret(
    mdp: &TabularMdp,
    expert: &DeterministicPolicy,
    imitator: &DeterministicPolicy,
) -> Result<f64> {
    Ok(average_reward(mdp, expert)? - average_reward(mdp, imitator)?)
}

/// TV distance between the state-action stationary distributions of two
/// policies.
pub fn expert_imitator_tv<P: PolicyLike + ?Sized, Q: PolicyLike + ?Sized>(
    mdp: &TabularMdp,
    expert: &P,
    imitator: &Q,
) -> Result<f64> {
    let rho_e = state_action_stationary(mdp, expert)?;
    let rho_i = state_action_stationary(mdp, imitator)?;
    tv_distance(&rho_e, &rho_i)
}

/// Stationary distribution over `(s, a)`: `rho(s) * pi(a|s)`.
pub fn state_action_stationary<P: PolicyLike + ?Sized>(
    mdp: &TabularMdp,
    policy: &P,
) -> Result<Vec<f64>> {
    let chain = mdp.induced_chain(policy);
    let rho = steady_state(&chain)?;
    let a_n = mdp.num_actions();
    let mut out = vec![0.0; mdp.num_states() * a_n];
    for s in 0..mdp.num_states() {
        for a in 0..a_n {
            out[s * a_n + a] = rho[s] * policy.prob(s, a);
        }
    }
    Ok(out)
}

/// Summary record of one imitation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub expert_count: usize,
    pub explore_count: usize,
    pub intrinsic_average: f64,
    pub average_reward: f64,
    pub expert_average_reward: f64,
    pub regret: f64,
    pub tv_to_expert: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{merge, rollout, SourceLabel};
    use crate::mdp::{greedy_policy, value_iteration, StochasticPolicy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exact_intrinsic_solver(mdp: &TabularMdp, gamma: f64) -> impl OfflineSolver + '_ {
        move |_d: &TransitionDataset, r: &IntrinsicReward| {
            let intrinsic_mdp = mdp
                .with_reward(r.table().to_vec())
                .unwrap()
                .with_discount(gamma)
                .unwrap();
            let q = value_iteration(&intrinsic_mdp, 1e-12, 1_000_000)?;
            Ok(greedy_policy(&q))
        }
    }

    #[test]
    fn indicator_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = TabularMdp::random(4, 2, 0.9, &mut rng);
        let pi = DeterministicPolicy::new(vec![0, 1, 0, 1], 2).unwrap();
        let d_e = rollout(&mdp, &pi, 200, None, SourceLabel::Expert, 3);
        let r = intrinsic_reward(&d_e, 4, 2).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                let expect = if d_e.contains_pair(s, a) { 1.0 } else { 0.0 };
                assert_eq!(r.get(s, a), expect);
            }
        }
    }

    #[test]
    fn empty_expert_dataset_gives_zero_reward_and_tie_policy() {
        let empty = TransitionDataset::empty(3, 2, SourceLabel::Expert);
        let r = intrinsic_reward(&empty, 3, 2).unwrap();
        assert!(r.table().iter().all(|&x| x == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mdp = TabularMdp::random(3, 2, 0.9, &mut rng);
        let d_x = rollout(
            &mdp,
            &StochasticPolicy::uniform(3, 2),
            100,
            None,
            SourceLabel::Exploratory,
            5,
        );
        let solver = exact_intrinsic_solver(&mdp, 0.9);
        let pi = run_ilbrl(&empty, &d_x, &solver).unwrap();
        assert!(pi.actions().iter().all(|&a| a == 0));
    }

    #[test]
    fn covered_expert_is_recovered_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mdp = TabularMdp::random(4, 2, 0.9, &mut rng);
        let expert = DeterministicPolicy::new(vec![1, 0, 1, 0], 2).unwrap();
        let d_e = rollout(&mdp, &expert, 2000, None, SourceLabel::Expert, 7);
        // dense random chains visit every state; the dataset covers all pairs
        assert_eq!(d_e.state_action_pairs().len(), 4);
        let d_x = rollout(
            &mdp,
            &StochasticPolicy::uniform(4, 2),
            4000,
            None,
            SourceLabel::Exploratory,
            8,
        );
        let solver = exact_intrinsic_solver(&mdp, 0.9);
        let learned = run_ilbrl(&d_e, &d_x, &solver).unwrap();
        assert_eq!(learned, expert);
        assert_eq!(expert_imitator_tv(&mdp, &expert, &learned).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_chain_expert_has_zero_tv() {
        // 4-state deterministic cycle under the expert action 0.
        let transition = vec![
            // s0: a0 -> s1, a1 -> s0
            0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, //
            // s1: a0 -> s2, a1 -> s1
            0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
            // s2: a0 -> s3, a1 -> s2
            0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, //
            // s3: a0 -> s0 or s1 evenly, a1 -> s3
            0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        ];
        let mdp = TabularMdp::new(
            4,
            2,
            transition,
            vec![0.5; 8],
            vec![1.0, 0.0, 0.0, 0.0],
            0.9,
        )
        .unwrap();
        let expert = DeterministicPolicy::new(vec![0, 0, 0, 0], 2).unwrap();
        let d_e = rollout(&mdp, &expert, 500, None, SourceLabel::Expert, 9);
        let d_x = rollout(
            &mdp,
            &StochasticPolicy::uniform(4, 2),
            2000,
            None,
            SourceLabel::Exploratory,
            10,
        );
        let solver = exact_intrinsic_solver(&mdp, 0.9);
        let learned = run_ilbrl(&d_e, &d_x, &solver).unwrap();
        assert_eq!(expert_imitator_tv(&mdp, &expert, &learned).unwrap(), 0.0);
    }

    #[test]
    fn intrinsic_average_reward_tracks_stationary_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = TabularMdp::random(4, 2, 0.9, &mut rng);
        let pi = DeterministicPolicy::new(vec![0, 1, 0, 1], 2).unwrap();
        // all pairs labelled: mass 1
        let full = IntrinsicReward::from_policy(&pi, 4, 2);
        assert!((intrinsic_average_reward(&mdp, &pi, &full).unwrap() - 1.0).abs() < 1e-12);
        // no pairs labelled: mass 0
        let none = intrinsic_reward(&TransitionDataset::empty(4, 2, SourceLabel::Expert), 4, 2)
            .unwrap();
        assert_eq!(intrinsic_average_reward(&mdp, &pi, &none).unwrap(), 0.0);
        // partial labelling: mass equals summed stationary mass on labels
        let other = DeterministicPolicy::new(vec![0, 1, 1, 1], 2).unwrap();
        let partial = IntrinsicReward::from_policy(&other, 4, 2);
        let rho = steady_state(&mdp.induced_chain(&pi)).unwrap();
        let expect: f64 = (0..4)
            .filter(|&s| pi.action(s) == other.action(s))
            .map(|s| rho[s])
            .sum();
        let got = intrinsic_average_reward(&mdp, &pi, &partial).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn imitation_regret_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = TabularMdp::random(2, 2, 0.9, &mut rng);
        let expert = DeterministicPolicy::new(vec![0, 1], 2).unwrap();
        assert_eq!(imitation_regret(&mdp, &expert, &expert).unwrap(), 0.0);

        let other = DeterministicPolicy::new(vec![1, 0], 2).unwrap();
        let gap = average_reward(&mdp, &expert).unwrap() - average_reward(&mdp, &other).unwrap();
        assert!((imitation_regret(&mdp, &expert, &other).unwrap() - gap).abs() < 1e-12);
    }

    #[test]
    fn merged_labelling_matches_algorithm_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mdp = TabularMdp::random(3, 2, 0.9, &mut rng);
        let expert = DeterministicPolicy::new(vec![0, 0, 1], 2).unwrap();
        let d_e = rollout(&mdp, &expert, 50, None, SourceLabel::Expert, 1);
        let d_x = rollout(
            &mdp,
            &StochasticPolicy::uniform(3, 2),
            50,
            None,
            SourceLabel::Exploratory,
            2,
        );
        let d_u = merge(&d_e, &d_x).unwrap();
        let r = intrinsic_reward(&d_e, 3, 2).unwrap();
        // labelled pairs are exactly the expert pairs inside the union
        for (s, a) in d_u.state_action_pairs() {
            let expect = if d_e.contains_pair(s, a) { 1.0 } else { 0.0 };
            assert_eq!(r.get(s, a), expect);
        }
    }
}
