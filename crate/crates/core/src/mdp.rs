//! Finite MDPs, policies, and exact discounted solvers.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// A finite MDP with dense transition tensor, bounded rewards and an
/// initial-state distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// Row-major `S*A*S`: `transition[(s*A + a)*S + s2] = P(s2 | s, a)`.
    transition: Vec<f64>,
    /// Row-major `S*A`, entries in `[0, 1]`.
    reward: Vec<f64>,
    initial_dist: Vec<f64>,
    discount: f64,
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidMdp("S and A must be positive".into()));
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::InvalidMdp(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                num_states * num_actions * num_states
            )));
        }
        if reward.len() != num_states * num_actions {
            return Err(Error::InvalidMdp(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                num_states * num_actions
            )));
        }
        if initial_dist.len() != num_states {
            return Err(Error::InvalidMdp("initial distribution length != S".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidMdp(format!(
                "discount {discount} outside [0, 1)"
            )));
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let row = &transition[(s * num_actions + a) * num_states..][..num_states];
                if row.iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidMdp(format!(
                        "negative transition probability at ({s}, {a})"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidMdp(format!(
                        "transition row ({s}, {a}) sums to {sum}, not 1"
                    )));
                }
                let r = reward[s * num_actions + a];
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::InvalidMdp(format!(
                        "reward at ({s}, {a}) is {r}, outside [0, 1]"
                    )));
                }
            }
        }
        if initial_dist.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidMdp("negative initial probability".into()));
        }
        let p0_sum: f64 = initial_dist.iter().sum();
        if (p0_sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidMdp(format!(
                "initial distribution sums to {p0_sum}, not 1"
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            transition,
            reward,
            initial_dist,
            discount,
        })
    }

    /// A dense random MDP. Transition rows are normalised exponential draws
    /// with a small uniform floor, which makes every induced chain ergodic.
    pub fn random<R: Rng + ?Sized>(
        num_states: usize,
        num_actions: usize,
        discount: f64,
        rng: &mut R,
    ) -> Self {
        let floor = 0.01;
        let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
        for _ in 0..num_states * num_actions {
            let raw: Vec<f64> = (0..num_states)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln() + floor)
                .collect();
            let sum: f64 = raw.iter().sum();
            // Renormalise exactly so the row invariant holds.
            let mut row: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            let err: f64 = 1.0 - row.iter().sum::<f64>();
            row[num_states - 1] += err;
            transition.extend(row);
        }
        let reward: Vec<f64> = (0..num_states * num_actions)
            .map(|_| rng.gen::<f64>())
            .collect();
        let mut initial_dist = vec![1.0 / num_states as f64; num_states];
        let err: f64 = 1.0 - initial_dist.iter().sum::<f64>();
        initial_dist[num_states - 1] += err;
        Self::new(
            num_states,
            num_actions,
            transition,
            reward,
            initial_dist,
            discount,
        )
        .expect("random MDP construction is valid")
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Same dynamics, different discount.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            self.reward.clone(),
            self.initial_dist.clone(),
            discount,
        )
    }

    /// Same dynamics, different reward table.
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            reward,
            self.initial_dist.clone(),
            self.discount,
        )
    }

    pub fn prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(s * self.num_actions + a) * self.num_states + s2]
    }

    /// `P(· | s, a)` as a slice of length `S`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.num_actions + a) * self.num_states..][..self.num_states]
    }

    pub fn reward_at(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// Transition matrix of the Markov chain induced by a policy.
    pub fn induced_chain<P: PolicyLike + ?Sized>(&self, policy: &P) -> DMatrix<f64> {
        let s_n = self.num_states;
        DMatrix::from_fn(s_n, s_n, |s, s2| {
            (0..self.num_actions)
                .map(|a| policy.prob(s, a) * self.prob(s, a, s2))
                .sum()
        })
    }

    /// Expected one-step reward per state under a policy.
    pub fn induced_reward<P: PolicyLike + ?Sized>(&self, policy: &P) -> Vec<f64> {
        (0..self.num_states)
            .map(|s| {
                (0..self.num_actions)
                    .map(|a| policy.prob(s, a) * self.reward_at(s, a))
                    .sum()
            })
            .collect()
    }

    /// Declarative text serialisation; round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "states {}", self.num_states).unwrap();
        writeln!(out, "actions {}", self.num_actions).unwrap();
        writeln!(out, "discount {}", self.discount).unwrap();
        writeln!(out, "transition {}", join_floats(&self.transition)).unwrap();
        writeln!(out, "reward {}", join_floats(&self.reward)).unwrap();
        writeln!(out, "initial {}", join_floats(&self.initial_dist)).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut states = None;
        let mut actions = None;
        let mut discount = None;
        let mut transition = None;
        let mut reward = None;
        let mut initial = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Parse(format!("malformed line: {line}")))?;
            match key {
                "states" => states = Some(parse_usize(rest)?),
                "actions" => actions = Some(parse_usize(rest)?),
                "discount" => discount = Some(parse_f64(rest)?),
                "transition" => transition = Some(parse_floats(rest)?),
                "reward" => reward = Some(parse_floats(rest)?),
                "initial" => initial = Some(parse_floats(rest)?),
                other => return Err(Error::Parse(format!("unknown key: {other}"))),
            }
        }
        let missing = |k: &str| Error::Parse(format!("missing key: {k}"));
        Self::new(
            states.ok_or_else(|| missing("states"))?,
            actions.ok_or_else(|| missing("actions"))?,
            transition.ok_or_else(|| missing("transition"))?,
            reward.ok_or_else(|| missing("reward"))?,
            initial.ok_or_else(|| missing("initial"))?,
            discount.ok_or_else(|| missing("discount"))?,
        )
    }
}

fn join_floats(xs: &[f64]) -> String {
    let mut out = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{x}").unwrap();
    }
    out
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}")))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|e| Error::Parse(format!("bad float {s:?}: {e}")))
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace().map(parse_f64).collect()
}

/// Common view over deterministic and stochastic policies.
pub trait PolicyLike {
    /// Probability of taking `a` in `s`.
    fn prob(&self, s: usize, a: usize) -> f64;

    fn num_states(&self) -> usize;

    /// The deterministic action, if this policy is deterministic.
    fn deterministic_action(&self, s: usize) -> Option<usize>;
}

/// A state -> action map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicPolicy {
    action_of: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(action_of: Vec<usize>, num_actions: usize) -> Result<Self> {
        if let Some(&bad) = action_of.iter().find(|&&a| a >= num_actions) {
            return Err(Error::InvalidPolicy(format!(
                "action index {bad} out of range (A = {num_actions})"
            )));
        }
        Ok(Self { action_of })
    }

    pub fn action(&self, s: usize) -> usize {
        self.action_of[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.action_of
    }

    pub fn random<R: Rng + ?Sized>(num_states: usize, num_actions: usize, rng: &mut R) -> Self {
        Self {
            action_of: (0..num_states).map(|_| rng.gen_range(0..num_actions)).collect(),
        }
    }
}

impl PolicyLike for DeterministicPolicy {
    fn prob(&self, s: usize, a: usize) -> f64 {
        if self.action_of[s] == a {
            1.0
        } else {
            0.0
        }
    }

    fn num_states(&self) -> usize {
        self.action_of.len()
    }

    fn deterministic_action(&self, s: usize) -> Option<usize> {
        Some(self.action_of[s])
    }
}

/// A state -> action-distribution map.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    /// Row-major `S*A`.
    probs: Vec<f64>,
    num_actions: usize,
}

impl StochasticPolicy {
    pub fn new(probs: Vec<f64>, num_states: usize, num_actions: usize) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::InvalidPolicy(format!(
                "probability table has {} entries, expected {}",
                probs.len(),
                num_states * num_actions
            )));
        }
        for s in 0..num_states {
            let row = &probs[s * num_actions..][..num_actions];
            if row.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidPolicy(format!("negative probability at state {s}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "row {s} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { probs, num_actions })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        let mut probs = vec![p; num_states * num_actions];
        for s in 0..num_states {
            let row = &mut probs[s * num_actions..][..num_actions];
            let err: f64 = 1.0 - row.iter().sum::<f64>();
            row[num_actions - 1] += err;
        }
        Self { probs, num_actions }
    }

    /// Per-state most-probable action, ties to the lowest index.
    pub fn argmax_policy(&self) -> DeterministicPolicy {
        let num_states = self.probs.len() / self.num_actions;
        let action_of = (0..num_states)
            .map(|s| {
                let row = &self.probs[s * self.num_actions..][..self.num_actions];
                argmax(row)
            })
            .collect();
        DeterministicPolicy { action_of }
    }
}

impl PolicyLike for StochasticPolicy {
    fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    fn num_states(&self) -> usize {
        self.probs.len() / self.num_actions
    }

    fn deterministic_action(&self, _s: usize) -> Option<usize> {
        None
    }
}

/// Index of the largest entry, ties broken by the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// An `S x A` action-value table.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    q: Vec<f64>,
    num_actions: usize,
}

impl ValueTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            q: vec![0.0; num_states * num_actions],
            num_actions,
        }
    }

    pub fn from_vec(q: Vec<f64>, num_actions: usize) -> Self {
        assert_eq!(q.len() % num_actions, 0);
        Self { q, num_actions }
    }

    pub fn num_states(&self) -> usize {
        self.q.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.q[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.num_actions..][..self.num_actions]
    }

    /// State value as the row max.
    pub fn state_value(&self, s: usize) -> f64 {
        self.row(s).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// State value under a fixed policy (policy-weighted row).
    pub fn state_value_under<P: PolicyLike + ?Sized>(&self, s: usize, policy: &P) -> f64 {
        (0..self.num_actions)
            .map(|a| policy.prob(s, a) * self.get(s, a))
            .sum()
    }

    pub fn sup_distance(&self, other: &ValueTable) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.q.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }
}

/// Per-state argmax of a value table, ties to the lowest action index.
pub fn greedy_policy(q: &ValueTable) -> DeterministicPolicy {
    DeterministicPolicy {
        action_of: (0..q.num_states()).map(|s| argmax(q.row(s))).collect(),
    }
}

/// Value iteration on the optimality backup until the sup-norm Bellman
/// residual drops below `tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iters: usize) -> Result<ValueTable> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    let gamma = mdp.discount();
    let mut q = ValueTable::zeros(s_n, a_n);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let next = bellman_backup(mdp, &q, gamma);
        residual = next.sup_distance(&q);
        q = next;
        if residual <= tol {
            return Ok(q);
        }
    }
    Err(Error::NoConvergence {
        iters: max_iters,
        residual,
        tol,
    })
}

/// One exact Bellman optimality backup of `q` under reward `mdp.reward`.
pub fn bellman_backup(mdp: &TabularMdp, q: &ValueTable, gamma: f64) -> ValueTable {
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    let v: Vec<f64> = (0..s_n).map(|s| q.state_value(s)).collect();
    let mut next = ValueTable::zeros(s_n, a_n);
    for s in 0..s_n {
        for a in 0..a_n {
            let exp: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(&v)
                .map(|(p, val)| p * val)
                .sum();
            next.set(s, a, mdp.reward_at(s, a) + gamma * exp);
        }
    }
    next
}

/// Exact discounted policy evaluation via the linear system
/// `(I - gamma * P_pi) V = r_pi`.
pub fn policy_value_discounted<P: PolicyLike + ?Sized>(
    mdp: &TabularMdp,
    policy: &P,
) -> Result<ValueTable> {
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    let gamma = mdp.discount();
    let p_pi = mdp.induced_chain(policy);
    let r_pi = nalgebra::DVector::from_vec(mdp.induced_reward(policy));
    let system = DMatrix::identity(s_n, s_n) - p_pi * gamma;
    let v = system
        .lu()
        .solve(&r_pi)
        .ok_or_else(|| Error::Numeric("singular policy-evaluation system".into()))?;
    let mut q = ValueTable::zeros(s_n, a_n);
    for s in 0..s_n {
        for a in 0..a_n {
            let exp: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(v.iter())
                .map(|(p, val)| p * val)
                .sum();
            q.set(s, a, mdp.reward_at(s, a) + gamma * exp);
        }
    }
    Ok(q)
}

/// State values of a policy, `V(s) = sum_a pi(a|s) Q(s,a)`.
pub fn policy_state_values<P: PolicyLike + ?Sized>(
    mdp: &TabularMdp,
    policy: &P,
) -> Result<Vec<f64>> {
    let q = policy_value_discounted(mdp, policy)?;
    Ok((0..mdp.num_states())
        .map(|s| q.state_value_under(s, policy))
        .collect())
}
