//! Transition datasets: rollouts, dataset algebra, splits, and file IO.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{PolicyLike, TabularMdp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceLabel {
    Expert,
    Exploratory,
    Mixed,
}

impl SourceLabel {
    fn as_str(self) -> &'static str {
        match self {
            SourceLabel::Expert => "expert",
            SourceLabel::Exploratory => "exploratory",
            SourceLabel::Mixed => "mixed",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(SourceLabel::Expert),
            "exploratory" => Ok(SourceLabel::Exploratory),
            "mixed" => Ok(SourceLabel::Mixed),
            other => Err(Error::Parse(format!("unknown source label: {other}"))),
        }
    }
}

/// One environment transition, including the action taken at the next
/// state when a successor record exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    pub episode: usize,
    pub step: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub next_action: Option<usize>,
    pub terminal: bool,
    pub timeout: bool,
    pub source: SourceLabel,
}

/// An ordered list of transitions from one or more rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    pub num_states: usize,
    pub num_actions: usize,
    pub source: SourceLabel,
    records: Vec<TransitionRecord>,
}

impl TransitionDataset {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        source: SourceLabel,
        records: Vec<TransitionRecord>,
    ) -> Result<Self> {
        for rec in &records {
            if rec.state >= num_states
                || rec.next_state >= num_states
                || rec.action >= num_actions
                || rec.next_action.is_some_and(|a| a >= num_actions)
            {
                return Err(Error::DimensionMismatch(format!(
                    "record indices out of range for S={num_states}, A={num_actions}: {rec:?}"
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            source,
            records,
        })
    }

    pub fn empty(num_states: usize, num_actions: usize, source: SourceLabel) -> Self {
        Self {
            num_states,
            num_actions,
            source,
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[TransitionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct `(s, a)` pairs; the indicator reward uses set semantics.
    pub fn state_action_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.records.iter().map(|r| (r.state, r.action)).collect()
    }

    pub fn contains_pair(&self, s: usize, a: usize) -> bool {
        self.records.iter().any(|r| r.state == s && r.action == a)
    }

    /// Dataset restricted to the given record indices, preserving order.
    fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            source: self.source,
            records: self.records[range].to_vec(),
        }
    }

    /// Line-delimited serialisation; round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "# transitions states={} actions={} source={}",
            self.num_states,
            self.num_actions,
            self.source.as_str()
        )
        .unwrap();
        writeln!(out, "episode step s a r s2 a2 terminal timeout source").unwrap();
        for r in &self.records {
            let a2 = r.next_action.map_or("-".to_string(), |a| a.to_string());
            writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {}",
                r.episode,
                r.step,
                r.state,
                r.action,
                r.reward,
                r.next_state,
                a2,
                r.terminal as u8,
                r.timeout as u8,
                r.source.as_str()
            )
            .unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty dataset file".into()))?;
        let mut num_states = None;
        let mut num_actions = None;
        let mut source = None;
        for token in header.trim_start_matches('#').split_whitespace() {
            if let Some((k, v)) = token.split_once('=') {
                match k {
                    "states" => {
                        num_states = Some(v.parse().map_err(|e| {
                            Error::Parse(format!("bad states count {v:?}: {e}"))
                        })?)
                    }
                    "actions" => {
                        num_actions = Some(v.parse().map_err(|e| {
                            Error::Parse(format!("bad actions count {v:?}: {e}"))
                        })?)
                    }
                    "source" => source = Some(SourceLabel::parse(v)?),
                    _ => {}
                }
            }
        }
        let num_states =
            num_states.ok_or_else(|| Error::Parse("header missing states=".into()))?;
        let num_actions =
            num_actions.ok_or_else(|| Error::Parse("header missing actions=".into()))?;
        let source = source.ok_or_else(|| Error::Parse("header missing source=".into()))?;

        let mut records = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with("episode") || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 10 {
                return Err(Error::Parse(format!("malformed record line: {line}")));
            }
            let parse_int = |s: &str| -> Result<usize> {
                s.parse()
                    .map_err(|e| Error::Parse(format!("bad index {s:?}: {e}")))
            };
            records.push(TransitionRecord {
                episode: parse_int(fields[0])?,
                step: parse_int(fields[1])?,
                state: parse_int(fields[2])?,
                action: parse_int(fields[3])?,
                reward: fields[4]
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad reward {:?}: {e}", fields[4])))?,
                next_state: parse_int(fields[5])?,
                next_action: if fields[6] == "-" {
                    None
                } else {
                    Some(parse_int(fields[6])?)
                },
                terminal: fields[7] == "1",
                timeout: fields[8] == "1",
                source: SourceLabel::parse(fields[9])?,
            });
        }
        Self::new(num_states, num_actions, source, records)
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

pub(crate) fn sample_action<R: Rng + ?Sized, P: PolicyLike + ?Sized>(
    policy: &P,
    s: usize,
    num_actions: usize,
    rng: &mut R,
) -> usize {
    if let Some(a) = policy.deterministic_action(s) {
        return a;
    }
    let weights: Vec<f64> = (0..num_actions).map(|a| policy.prob(s, a)).collect();
    sample_index(&weights, rng)
}

/// Sample `num_steps` transitions from the MDP under `policy`, starting
/// from the initial distribution. With a finite `horizon` the stream is cut
/// into episodes, each ending in a timeout record and a fresh initial
/// state. Identical seeds give bit-identical datasets.
pub fn rollout<P: PolicyLike + ?Sized>(
    mdp: &TabularMdp,
    policy: &P,
    num_steps: usize,
    horizon: Option<usize>,
    source: SourceLabel,
    seed: u64,
) -> TransitionDataset {
    assert!(num_steps >= 1, "num_steps must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_n = mdp.num_actions();
    let mut records = Vec::with_capacity(num_steps);

    let mut episode = 0;
    let mut step = 0;
    let mut s = sample_index(mdp.initial_dist(), &mut rng);
    let mut a = sample_action(policy, s, a_n, &mut rng);
    for i in 0..num_steps {
        let s2 = sample_index(mdp.transition_row(s, a), &mut rng);
        let a2 = sample_action(policy, s2, a_n, &mut rng);
        let episode_ends = horizon.is_some_and(|h| step + 1 >= h) || i + 1 == num_steps;
        records.push(TransitionRecord {
            episode,
            step,
            state: s,
            action: a,
            reward: mdp.reward_at(s, a),
            next_state: s2,
            next_action: if episode_ends { None } else { Some(a2) },
            terminal: false,
            timeout: episode_ends && horizon.is_some_and(|h| step + 1 >= h),
            source,
        });
        if episode_ends && i + 1 < num_steps {
            episode += 1;
            step = 0;
            s = sample_index(mdp.initial_dist(), &mut rng);
            a = sample_action(policy, s, a_n, &mut rng);
        } else {
            step += 1;
            s = s2;
            a = a2;
        }
    }
    TransitionDataset {
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        source,
        records,
    }
}

/// Concatenate the expert and exploratory datasets, keeping per-record
/// source labels.
pub fn merge(d_e: &TransitionDataset, d_x: &TransitionDataset) -> Result<TransitionDataset> {
    if d_e.num_states != d_x.num_states || d_e.num_actions != d_x.num_actions {
        return Err(Error::DimensionMismatch(format!(
            "expert ({}, {}) vs exploratory ({}, {})",
            d_e.num_states, d_e.num_actions, d_x.num_states, d_x.num_actions
        )));
    }
    let mut records = d_e.records.clone();
    records.extend(d_x.records.iter().cloned());
    Ok(TransitionDataset {
        num_states: d_e.num_states,
        num_actions: d_e.num_actions,
        source: SourceLabel::Mixed,
        records,
    })
}

/// The Phase-1 splits: a training set, an evaluation training set, and a
/// held-out set restricted to initial-state records.
#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub train: TransitionDataset,
    pub eval_train: TransitionDataset,
    pub eval_final: TransitionDataset,
}

/// Split by index arithmetic: `i = int(d * |D|)` bounds the training set,
/// then `l = int(d' * |D_V|)` bounds the evaluation training set inside the
/// remainder; the rest is restricted to step-0 records.
pub fn split_dataset(d: &TransitionDataset, train_frac: f64, ope_frac: f64) -> Result<DatasetSplits> {
    if !(0.0..1.0).contains(&train_frac) || train_frac <= 0.0 {
        return Err(Error::InvalidSplit(format!("train fraction {train_frac} not in (0, 1)")));
    }
    if !(0.0..1.0).contains(&ope_frac) || ope_frac <= 0.0 {
        return Err(Error::InvalidSplit(format!("ope fraction {ope_frac} not in (0, 1)")));
    }
    let n = d.len();
    let i = (train_frac * n as f64) as usize;
    let train = d.slice(0..i);
    let valid = d.slice(i..n);
    let l = (ope_frac * valid.len() as f64) as usize;
    let eval_train = valid.slice(0..l);
    let mut eval_final = valid.slice(l..valid.len());
    eval_final.records.retain(|r| r.step == 0);
    if train.is_empty() || eval_train.is_empty() || eval_final.is_empty() {
        return Err(Error::InvalidSplit(format!(
            "empty split: |train|={}, |eval_train|={}, |eval_final|={}",
            train.len(),
            eval_train.len(),
            eval_final.len()
        )));
    }
    Ok(DatasetSplits {
        train,
        eval_train,
        eval_final,
    })
}
