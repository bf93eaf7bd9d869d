//! Phased Q-learning on parallel samples, and the planner that turns a
//! target `(epsilon, delta)` into concrete sample budgets.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{greedy_policy, DeterministicPolicy, TabularMdp, ValueTable};
use crate::sampler::{thinning_period, ParallelSamples};

/// Where the empirical bootstrap draws its successor states from.
#[derive(Debug, Clone, Copy)]
pub enum SampleSource<'a> {
    /// Sampled buckets, `m` fresh draws per pair per iteration.
    Buckets {
        samples: &'a ParallelSamples,
        m: usize,
    },
    /// Oracle transition access: the bucket average is replaced by the
    /// exact expectation, making each update a value-iteration step.
    Exact(&'a TabularMdp),
}

/// One phased update on full buckets:
/// `Q'(s,a) = r(s,a) + gamma * mean_k max_a' Q(s'_k, a')`.
pub fn phased_q_update(
    q: &ValueTable,
    samples: &ParallelSamples,
    reward: &[f64],
    gamma: f64,
) -> Result<ValueTable> {
    let m = samples.per_pair_count();
    sliced_update(q, samples, 0, m, reward, gamma)
}

fn sliced_update(
    q: &ValueTable,
    samples: &ParallelSamples,
    slice: usize,
    m: usize,
    reward: &[f64],
    gamma: f64,
) -> Result<ValueTable> {
    let s_n = samples.num_states();
    let a_n = samples.num_actions();
    let v: Vec<f64> = (0..s_n).map(|s| q.state_value(s)).collect();
    let mut next = ValueTable::zeros(s_n, a_n);
    for s in 0..s_n {
        for a in 0..a_n {
            let bucket = samples.bucket(s, a);
            let lo = slice * m;
            let hi = lo + m;
            if m == 0 || bucket.len() < hi {
                return Err(Error::EmptyBucket { state: s, action: a });
            }
            let mean: f64 =
                bucket[lo..hi].iter().map(|&s2| v[s2]).sum::<f64>() / m as f64;
            next.set(s, a, reward[s * a_n + a] + gamma * mean);
        }
    }
    Ok(next)
}

/// Output of a phased Q-learning run.
#[derive(Debug, Clone)]
pub struct PhasedQRun {
    pub q: ValueTable,
    pub policy: DeterministicPolicy,
    /// Worst observed gap between the bucket mean of the bootstrapped
    /// value and its exact expectation, when a probe MDP was supplied.
    pub max_concentration: Option<f64>,
}

/// `ell` phased updates from `Q_0 = 0`, consuming a fresh disjoint slice of
/// `m` samples per pair each iteration. With `probe` set, the exact
/// transition model is used to measure the realised concentration error.
pub fn phased_q_learn(
    source: SampleSource<'_>,
    reward: &[f64],
    gamma: f64,
    ell: usize,
    probe: Option<&TabularMdp>,
) -> Result<PhasedQRun> {
    let (s_n, a_n) = match source {
        SampleSource::Buckets { samples, .. } => (samples.num_states(), samples.num_actions()),
        SampleSource::Exact(mdp) => (mdp.num_states(), mdp.num_actions()),
    };
    let mut q = ValueTable::zeros(s_n, a_n);
    let mut max_concentration: Option<f64> = probe.map(|_| 0.0);
    for i in 0..ell {
        if let (Some(mdp), SampleSource::Buckets { samples, m }) = (probe, source) {
            let worst = concentration_error(&q, samples, i, m, mdp);
            let entry = max_concentration.get_or_insert(0.0);
            *entry = entry.max(worst);
        }
        q = match source {
            SampleSource::Buckets { samples, m } => {
                sliced_update(&q, samples, i, m, reward, gamma)?
            }
            SampleSource::Exact(mdp) => exact_update(&q, mdp, reward, gamma),
        };
    }
    let policy = greedy_policy(&q);
    Ok(PhasedQRun {
        q,
        policy,
        max_concentration,
    })
}

fn exact_update(q: &ValueTable, mdp: &TabularMdp, reward: &[f64], gamma: f64) -> ValueTable {
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
            next.set(s, a, reward[s * a_n + a] + gamma * exp);
        }
    }
    next
}

/// `max_{s,a} |bucket mean of V - exact expectation of V|` for the slice
/// consumed at iteration `i`.
fn concentration_error(
    q: &ValueTable,
    samples: &ParallelSamples,
    slice: usize,
    m: usize,
    mdp: &TabularMdp,
) -> f64 {
    let s_n = samples.num_states();
    let a_n = samples.num_actions();
    let v: Vec<f64> = (0..s_n).map(|s| q.state_value(s)).collect();
    let mut worst = 0.0f64;
    for s in 0..s_n {
        for a in 0..a_n {
            let bucket = samples.bucket(s, a);
            let lo = slice * m;
            let hi = (lo + m).min(bucket.len());
            if hi <= lo {
                continue;
            }
            let mean: f64 =
                bucket[lo..hi].iter().map(|&s2| v[s2]).sum::<f64>() / (hi - lo) as f64;
            let exact: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(&v)
                .map(|(p, val)| p * val)
                .sum();
            worst = worst.max((mean - exact).abs());
        }
    }
    worst
}

/// The full error and budget ledger instantiating the sample-complexity
/// analysis for a target `(epsilon, delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParameters {
    pub epsilon: f64,
    pub delta: f64,
    /// Discounted-regret budget for the solver.
    pub eta: f64,
    /// Concentration error of the empirical bootstrap.
    pub eta_prime: f64,
    /// Expert-reward slack.
    pub nu: f64,
    /// Planner-chosen discount.
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda2: f64,
    /// Iteration count.
    pub ell: usize,
    /// Samples per pair per iteration.
    pub m: usize,
    /// Thinning period for simulated parallel sampling.
    pub thinning_period: usize,
    /// Thinned samples needed for coverage.
    pub coverage_samples: usize,
    pub expert_count: usize,
    /// Raw exploratory steps; planner budgets can exceed the 64-bit range
    /// at desk-scale epsilon, so this is reported at 128 bits.
    pub explore_count: u128,
    pub delta_solver: f64,
    pub delta_coverage: f64,
    pub delta_expert: f64,
    pub t_expert: usize,
    pub t_explore: usize,
    pub p_min: f64,
    pub num_states: usize,
    pub num_actions: usize,
}

impl BoundParameters {
    /// Human-readable ledger listing every constant with the formula it
    /// came from. Parseable by `from_ledger_text`.
    pub fn to_ledger_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String, formula: &str| {
            writeln!(out, "{k} = {v}  # {formula}").unwrap();
        };
        put("epsilon", format!("{}", self.epsilon), "target regret / TV");
        put("delta", format!("{}", self.delta), "target failure probability");
        put("num_states", format!("{}", self.num_states), "S");
        put("num_actions", format!("{}", self.num_actions), "A");
        put("t_expert", format!("{}", self.t_expert), "expert chain mixing time");
        put("t_explore", format!("{}", self.t_explore), "exploratory chain mixing time");
        put("p_min", format!("{}", self.p_min), "min state-action stationary mass of the exploratory chain");
        put("alpha", format!("{}", self.alpha), "4 (1 + 4 t_expert) / epsilon");
        put("beta", format!("{}", self.beta), "kappa(Sigma) * ||r||_2");
        put("lambda2", format!("{}", self.lambda2), "|second eigenvalue| of the optimal chain");
        put("gamma", format!("{}", self.gamma), "(2 alpha beta - 1) / (2 alpha beta - lambda2)");
        put("eta", format!("{}", self.eta), "1 / (alpha (1 - gamma))");
        put("ell", format!("{}", self.ell), "ceil(log_gamma((1 - gamma) / (4 alpha)))");
        put("eta_prime", format!("{}", self.eta_prime), "(eta (1 - gamma)^2 / 2 - gamma^ell) / gamma");
        put("nu", format!("{}", self.nu), "1 / alpha");
        put("delta_solver", format!("{}", self.delta_solver), "delta / 4");
        put("delta_coverage", format!("{}", self.delta_coverage), "delta / 4");
        put("delta_expert", format!("{}", self.delta_expert), "delta / 2");
        put("m", format!("{}", self.m), "ceil(per-pair solver samples: concentration bound / ell)");
        put("thinning_period", format!("{}", self.thinning_period), "ceil(t_explore log(2 / p_min) / log 2)");
        put("coverage_samples", format!("{}", self.coverage_samples), "ceil((2 / p_min) log(S A / delta_coverage))");
        put("expert_count", format!("{}", self.expert_count), "max(ceil(128 S t_expert (1 + 4 t_expert)^2 / eps^2), ceil(72 t_expert (1 + 4 t_expert)^2 log(4 / delta) / eps^2))");
        put("explore_count", format!("{}", self.explore_count), "coverage_samples * thinning_period * m * ell");
        out
    }

    pub fn from_ledger_text(text: &str) -> Result<Self> {
        let mut get = std::collections::BTreeMap::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("malformed ledger line: {line}")))?;
            get.insert(k.trim().to_string(), v.trim().to_string());
        }
        let f = |k: &str| -> Result<f64> {
            get.get(k)
                .ok_or_else(|| Error::Parse(format!("ledger missing {k}")))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad value for {k}: {e}")))
        };
        let u = |k: &str| -> Result<usize> {
            get.get(k)
                .ok_or_else(|| Error::Parse(format!("ledger missing {k}")))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad value for {k}: {e}")))
        };
        Ok(Self {
            epsilon: f("epsilon")?,
            delta: f("delta")?,
            eta: f("eta")?,
            eta_prime: f("eta_prime")?,
            nu: f("nu")?,
            gamma: f("gamma")?,
            alpha: f("alpha")?,
            beta: f("beta")?,
            lambda2: f("lambda2")?,
            ell: u("ell")?,
            m: u("m")?,
            thinning_period: u("thinning_period")?,
            coverage_samples: u("coverage_samples")?,
            expert_count: u("expert_count")?,
            explore_count: get
                .get("explore_count")
                .ok_or_else(|| Error::Parse("ledger missing explore_count".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad value for explore_count: {e}")))?,
            delta_solver: f("delta_solver")?,
            delta_coverage: f("delta_coverage")?,
            delta_expert: f("delta_expert")?,
            t_expert: u("t_expert")?,
            t_explore: u("t_explore")?,
            p_min: f("p_min")?,
            num_states: u("num_states")?,
            num_actions: u("num_actions")?,
        })
    }
}

/// Expert-sample requirement: the max of the two closed forms.
pub fn expert_sample_requirement(epsilon: f64, delta: f64, num_states: usize, t_expert: usize) -> u64 {
    let s = num_states as f64;
    let t = t_expert as f64;
    let coverage = 128.0 * s * t * (1.0 + 4.0 * t).powi(2) / (epsilon * epsilon);
    let concentration =
        72.0 * t * (1.0 + 4.0 * t).powi(2) * (4.0 / delta).ln() / (epsilon * epsilon);
    coverage.max(concentration).ceil() as u64
}

/// Instantiate every constant of the sample-complexity analysis for the
/// target `(epsilon, delta)` on a chain with the given spectral summary.
#[allow(clippy::too_many_arguments)]
pub fn plan_parameters(
    epsilon: f64,
    delta: f64,
    num_states: usize,
    num_actions: usize,
    t_expert: usize,
    t_explore: usize,
    p_min: f64,
    beta: f64,
    lambda2: f64,
) -> Result<BoundParameters> {
    if !(0.0..1.0).contains(&epsilon) && epsilon != 1.0 || epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} not in (0, 1]")));
    }
    if !(0.0..1.0).contains(&delta) || delta <= 0.0 {
        return Err(Error::InvalidArgument(format!("delta {delta} not in (0, 1)")));
    }
    if !(0.0..1.0).contains(&lambda2) {
        return Err(Error::InvalidArgument(format!("lambda2 {lambda2} not in [0, 1)")));
    }
    if beta <= 0.0 {
        return Err(Error::InvalidArgument("beta must be positive".into()));
    }
    if p_min <= 0.0 || p_min > 1.0 {
        return Err(Error::InvalidArgument(format!("p_min {p_min} not in (0, 1]")));
    }

    let t_e = t_expert as f64;
    let alpha = 4.0 * (1.0 + 4.0 * t_e) / epsilon;
    let two_ab = 2.0 * alpha * beta;
    if two_ab < 1.0 {
        return Err(Error::InfeasibleParameters(format!(
            "2 alpha beta = {two_ab} < 1; planner discount would be negative"
        )));
    }
    let gamma = (two_ab - 1.0) / (two_ab - lambda2);
    let one_minus_gamma = (1.0 - lambda2) / (two_ab - lambda2);

    let delta_solver = delta / 4.0;
    let delta_coverage = delta / 4.0;
    let delta_expert = delta / 2.0;
    let nu = 1.0 / alpha;
    let eta = 1.0 / (alpha * one_minus_gamma);

    // ell = ceil(log_gamma((1 - gamma) / (4 alpha))), in log space.
    let log_gamma = gamma.ln();
    if log_gamma >= 0.0 {
        return Err(Error::Numeric("discount rounded to 1; gamma^ell underflows".into()));
    }
    let target = (one_minus_gamma / (4.0 * alpha)).ln();
    let ell_f = (target / log_gamma).ceil();
    if !ell_f.is_finite() || ell_f > 1e15 {
        return Err(Error::Numeric(format!("iteration count overflow: ell = {ell_f}")));
    }
    let ell = ell_f.max(1.0) as usize;
    let log_gamma_ell = ell as f64 * log_gamma;
    let gamma_ell = log_gamma_ell.exp();

    let lhs = eta * one_minus_gamma * one_minus_gamma;
    if lhs <= 2.0 * gamma_ell {
        return Err(Error::InfeasibleParameters(format!(
            "eta (1 - gamma)^2 = {lhs} must exceed 2 gamma^ell = {}",
            2.0 * gamma_ell
        )));
    }
    let eta_prime = (lhs / 2.0 - gamma_ell) / gamma;

    let m_ell_total = crate::bounds::lemma3_min_phase_samples(
        eta,
        gamma,
        ell,
        num_states,
        num_actions,
        delta_solver,
    )?;
    let m_f = (m_ell_total / ell as f64).ceil();
    if m_f > 9e18 {
        return Err(Error::Numeric(format!("per-phase sample count overflow: m = {m_f}")));
    }
    let m = m_f.max(1.0) as usize;

    let period = thinning_period(t_explore, p_min);
    let sa = (num_states * num_actions) as f64;
    let coverage_f = ((2.0 / p_min) * (sa / delta_coverage).ln()).ceil();
    let coverage_samples = coverage_f.max(1.0) as usize;

    let expert_count = expert_sample_requirement(epsilon, delta, num_states, t_expert) as usize;
    let explore_f = coverage_f * period as f64 * m as f64 * ell as f64;
    if explore_f > 3.0e38 {
        return Err(Error::Numeric(format!("exploratory budget overflow: {explore_f:.3e}")));
    }
    let explore_count = explore_f as u128;

    Ok(BoundParameters {
        epsilon,
        delta,
        eta,
        eta_prime,
        nu,
        gamma,
        alpha,
        beta,
        lambda2,
        ell,
        m,
        thinning_period: period,
        coverage_samples,
        expert_count,
        explore_count,
        delta_solver,
        delta_coverage,
        delta_expert,
        t_expert,
        t_explore,
        p_min,
        num_states,
        num_actions,
    })
}
