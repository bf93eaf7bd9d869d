//! Pipeline stages operating on on-disk artifacts.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use ilbrl_core::bounds::{verify_bound, BoundId, VerificationReport, VerifierConfig};
use ilbrl_core::data::{merge, rollout, SourceLabel, TransitionDataset};
use ilbrl_core::ilbrl::{
    imitation_regret, intrinsic_reward, phased_q_dataset_solver, run_ilbrl, IntrinsicReward,
};
use ilbrl_core::ope::{esarsa_evaluate, select_policy, tune_ope, OpeConfig};
use ilbrl_core::seeds::derive_seed;
use ilbrl_core::stats::{performance_profile, profile_to_csv, stratified_bootstrap_iqm_ci};
use ilbrl_core::support::{label_dataset, FeatureDataset};
use ilbrl_core::{
    greedy_policy, value_iteration, DeterministicPolicy, StochasticPolicy, TabularMdp,
};

use crate::config::{Config, Provenance};

pub type StageResult<T> = Result<T, String>;

/// Everything a stage needs: the parsed config, the output directory, the
/// effective master seed, and the provenance stamp.
pub struct Context {
    pub cfg: Config,
    pub out: PathBuf,
    pub seed: u64,
    pub provenance: Provenance,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_text(&self, name: &str, body: &str) -> StageResult<()> {
        let content = format!("{body}{}", self.provenance.comment());
        fs::write(self.path(name), content)
            .map_err(|e| format!("cannot write {name}: {e}"))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> StageResult<()> {
        let mut body = serde_json::to_string_pretty(value)
            .map_err(|e| format!("cannot serialise {name}: {e}"))?;
        body.push('\n');
        fs::write(self.path(name), body).map_err(|e| format!("cannot write {name}: {e}"))
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, name: &str) -> StageResult<T> {
        let body = fs::read_to_string(self.path(name))
            .map_err(|e| format!("missing artifact {name} (run the earlier stages): {e}"))?;
        serde_json::from_str(&body).map_err(|e| format!("corrupt artifact {name}: {e}"))
    }

    fn read_mdp(&self) -> StageResult<TabularMdp> {
        let text = fs::read_to_string(self.path("mdp.txt"))
            .map_err(|e| format!("missing artifact mdp.txt (run generate-data): {e}"))?;
        TabularMdp::from_text(&text).map_err(|e| format!("corrupt mdp.txt: {e}"))
    }

    fn read_dataset(&self, name: &str) -> StageResult<TransitionDataset> {
        let text = fs::read_to_string(self.path(name))
            .map_err(|e| format!("missing artifact {name} (run generate-data): {e}"))?;
        TransitionDataset::from_text(&text).map_err(|e| format!("corrupt {name}: {e}"))
    }

    fn section<'a, T>(&self, section: &'a Option<T>, name: &str) -> StageResult<&'a T> {
        section
            .as_ref()
            .ok_or_else(|| format!("config section [{name}] is required for this stage"))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyArtifact {
    actions: Vec<usize>,
    num_actions: usize,
    provenance: Provenance,
}

impl PolicyArtifact {
    fn policy(&self) -> StageResult<DeterministicPolicy> {
        DeterministicPolicy::new(self.actions.clone(), self.num_actions)
            .map_err(|e| format!("corrupt policy artifact: {e}"))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RewardArtifact {
    num_states: usize,
    num_actions: usize,
    table: Vec<f64>,
    provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainRecord {
    seed: u64,
    expert_count: usize,
    explore_count: usize,
    average_reward: f64,
    expert_average_reward: f64,
    regret: f64,
    tv_to_expert: f64,
    provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct OpeCell {
    eval_seed: u64,
    diverged: bool,
    mean_initial_value: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OpeArtifact {
    cells: Vec<OpeCell>,
    provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectionArtifact {
    phi_star: OpeConfig,
    rank_known_policies: usize,
    chosen_candidate: usize,
    chosen_actions: Vec<usize>,
    provenance: Provenance,
}

#[derive(Debug, Serialize)]
struct VerifyArtifact<'a> {
    report: &'a VerificationReport,
    provenance: &'a Provenance,
}

#[derive(Debug, Serialize)]
struct ReportSummary<'a> {
    iqm_point: f64,
    iqm_lo: f64,
    iqm_hi: f64,
    level: f64,
    n_boot: usize,
    tasks: usize,
    provenance: &'a Provenance,
}

#[derive(Debug, Serialize)]
struct FailureRecord<'a> {
    stage: &'a str,
    error: &'a str,
    provenance: &'a Provenance,
}

pub fn run_stage(ctx: &Context, stage: &str) -> StageResult<()> {
    match stage {
        "generate-data" => generate_data(ctx),
        "label-rewards" => label_rewards(ctx),
        "train" => train(ctx),
        "evaluate-offline" => evaluate_offline(ctx),
        "select" => select(ctx),
        "verify-bounds" => verify_bounds(ctx),
        "report" => report(ctx),
        other => Err(format!(
            "unknown stage {other:?}; expected one of generate-data, label-rewards, train, \
             evaluate-offline, select, verify-bounds, report"
        )),
    }
}

/// Run the config's declared stages in order; on failure, record which
/// stage failed alongside the partial artifacts.
pub fn run_pipeline(ctx: &Context) -> StageResult<()> {
    let stages = if ctx.cfg.stages.is_empty() {
        return Err("config declares no stages; set `stages = [...]`".into());
    } else {
        ctx.cfg.stages.clone()
    };
    for stage in &stages {
        if let Err(error) = run_stage(ctx, stage) {
            let _ = ctx.write_json(
                "failure.json",
                &FailureRecord {
                    stage,
                    error: &error,
                    provenance: &ctx.provenance,
                },
            );
            return Err(format!("stage {stage} failed: {error}"));
        }
    }
    Ok(())
}

fn generate_data(ctx: &Context) -> StageResult<()> {
    let mdp_cfg = ctx.section(&ctx.cfg.mdp, "mdp")?;
    let data_cfg = ctx.section(&ctx.cfg.data, "data")?;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(ctx.seed, "mdp", 0));
    let mdp = TabularMdp::random(
        mdp_cfg.num_states,
        mdp_cfg.num_actions,
        mdp_cfg.discount,
        &mut rng,
    );
    ctx.write_text("mdp.txt", &mdp.to_text())?;

    let q = value_iteration(&mdp, 1e-12, 1_000_000).map_err(|e| e.to_string())?;
    let expert = greedy_policy(&q);
    ctx.write_json(
        "expert_policy.json",
        &PolicyArtifact {
            actions: expert.actions().to_vec(),
            num_actions: mdp_cfg.num_actions,
            provenance: ctx.provenance.clone(),
        },
    )?;

    let d_e = rollout(
        &mdp,
        &expert,
        data_cfg.expert_steps,
        data_cfg.horizon,
        SourceLabel::Expert,
        derive_seed(ctx.seed, "expert-data", 0),
    );
    ctx.write_text("expert_data.txt", &d_e.to_text())?;

    let explore = StochasticPolicy::uniform(mdp_cfg.num_states, mdp_cfg.num_actions);
    let d_x = rollout(
        &mdp,
        &explore,
        data_cfg.explore_steps,
        data_cfg.horizon,
        SourceLabel::Exploratory,
        derive_seed(ctx.seed, "explore-data", 0),
    );
    ctx.write_text("explore_data.txt", &d_x.to_text())
}

fn label_rewards(ctx: &Context) -> StageResult<()> {
    let d_e = ctx.read_dataset("expert_data.txt")?;
    let reward = intrinsic_reward(&d_e, d_e.num_states, d_e.num_actions)
        .map_err(|e| e.to_string())?;
    ctx.write_json(
        "rewards.json",
        &RewardArtifact {
            num_states: d_e.num_states,
            num_actions: d_e.num_actions,
            table: reward.table().to_vec(),
            provenance: ctx.provenance.clone(),
        },
    )?;

    if let Some(support) = &ctx.cfg.support {
        let text = fs::read_to_string(&support.features)
            .map_err(|e| format!("cannot read features {}: {e}", support.features))?;
        let features = FeatureDataset::from_text(&text).map_err(|e| e.to_string())?;
        let labels = label_dataset(&features).map_err(|e| e.to_string())?;
        let mut csv = String::from("index,reward\n");
        for (i, r) in labels.iter().enumerate() {
            csv.push_str(&format!("{i},{r}\n"));
        }
        ctx.write_text("feature_rewards.csv", &csv)?;
    }
    Ok(())
}

fn train(ctx: &Context) -> StageResult<()> {
    let solver_cfg = ctx.section(&ctx.cfg.solver, "solver")?;
    let mdp = ctx.read_mdp()?;
    let d_e = ctx.read_dataset("expert_data.txt")?;
    let d_x = ctx.read_dataset("explore_data.txt")?;
    let gamma = solver_cfg.gamma;
    let ell = solver_cfg.ell;
    let seed = derive_seed(ctx.seed, "train", 0);
    let solver = move |d_u: &TransitionDataset, r: &IntrinsicReward| {
        phased_q_dataset_solver(d_u, r, gamma, ell, seed)
    };
    let learned = run_ilbrl(&d_e, &d_x, &solver).map_err(|e| e.to_string())?;
    ctx.write_json(
        "policy.json",
        &PolicyArtifact {
            actions: learned.actions().to_vec(),
            num_actions: d_e.num_actions,
            provenance: ctx.provenance.clone(),
        },
    )?;

    let expert_art: PolicyArtifact = ctx.read_json("expert_policy.json")?;
    let expert = expert_art.policy()?;
    let regret = imitation_regret(&mdp, &expert, &learned).map_err(|e| e.to_string())?;
    let tv = ilbrl_core::ilbrl::expert_imitator_tv(&mdp, &expert, &learned)
        .map_err(|e| e.to_string())?;
    let mu_e = ilbrl_core::chain::average_reward(&mdp, &expert).map_err(|e| e.to_string())?;
    ctx.write_json(
        "train_record.json",
        &TrainRecord {
            seed: ctx.seed,
            expert_count: d_e.len(),
            explore_count: d_x.len(),
            average_reward: mu_e - regret,
            expert_average_reward: mu_e,
            regret,
            tv_to_expert: tv,
            provenance: ctx.provenance.clone(),
        },
    )
}

/// The merged dataset split into training and the two evaluation parts.
fn evaluation_splits(
    ctx: &Context,
) -> StageResult<(TransitionDataset, TransitionDataset, TransitionDataset)> {
    let data_cfg = ctx.section(&ctx.cfg.data, "data")?;
    let d_e = ctx.read_dataset("expert_data.txt")?;
    let d_x = ctx.read_dataset("explore_data.txt")?;
    let d_u = merge(&d_e, &d_x).map_err(|e| e.to_string())?;
    let splits = ilbrl_core::data::split_dataset(
        &d_u,
        data_cfg.train_fraction,
        data_cfg.ope_fraction,
    )
    .map_err(|e| e.to_string())?;
    Ok((splits.train, splits.eval_train, splits.eval_final))
}

fn evaluate_offline(ctx: &Context) -> StageResult<()> {
    let ope_cfg = ctx.section(&ctx.cfg.ope, "ope")?.base();
    let selection_cfg = ctx.section(&ctx.cfg.selection, "selection")?;
    let (_, d_pe, d_f) = evaluation_splits(ctx)?;
    let policy_art: PolicyArtifact = ctx.read_json("policy.json")?;
    let policy = policy_art.policy()?;
    let mut cells = Vec::new();
    for &eval_seed in &selection_cfg.eval_seeds {
        let run = esarsa_evaluate(
            &d_pe,
            &policy,
            &ope_cfg,
            derive_seed(ctx.seed, "evaluate", eval_seed),
        )
        .map_err(|e| e.to_string())?;
        cells.push(OpeCell {
            eval_seed,
            diverged: run.diverged,
            mean_initial_value: (!run.diverged).then(|| run.mean_initial_value(&d_f)),
        });
    }
    ctx.write_json(
        "ope_results.json",
        &OpeArtifact {
            cells,
            provenance: ctx.provenance.clone(),
        },
    )
}

fn select(ctx: &Context) -> StageResult<()> {
    let ope_section = ctx.section(&ctx.cfg.ope, "ope")?;
    let selection_cfg = ctx.section(&ctx.cfg.selection, "selection")?;
    let mdp = ctx.read_mdp()?;
    let (_, d_pe, d_f) = evaluation_splits(ctx)?;
    let expert_art: PolicyArtifact = ctx.read_json("expert_policy.json")?;
    let expert = expert_art.policy()?;
    let trained_art: PolicyArtifact = ctx.read_json("policy.json")?;
    let trained = trained_art.policy()?;

    // known policies of different quality: the expert, the everywhere-first
    // action, and the everywhere-last action
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    let low = DeterministicPolicy::new(vec![0; s_n], a_n).map_err(|e| e.to_string())?;
    let high = DeterministicPolicy::new(vec![a_n - 1; s_n], a_n).map_err(|e| e.to_string())?;
    let known = vec![expert.clone(), low, high];
    let starts: Vec<usize> = d_f
        .records()
        .iter()
        .filter(|r| r.step == 0)
        .map(|r| r.state)
        .collect();
    let starts = if starts.is_empty() {
        d_f.records().iter().map(|r| r.state).collect()
    } else {
        starts
    };
    let truths: Vec<f64> = known
        .iter()
        .map(|p| {
            let v = ilbrl_core::mdp::policy_state_values(&mdp, p).map_err(|e| e.to_string())?;
            Ok(starts.iter().map(|&s| v[s]).sum::<f64>() / starts.len().max(1) as f64)
        })
        .collect::<StageResult<_>>()?;

    let phi_star = tune_ope(
        &d_pe,
        &d_f,
        &known,
        &truths,
        &ope_section.grid(),
        &selection_cfg.eval_seeds,
    )
    .map_err(|e| e.to_string())?;

    let candidates = vec![vec![trained], vec![expert]];
    let (chosen, group) = select_policy(
        &candidates,
        &d_pe,
        &d_f,
        &phi_star,
        &selection_cfg.eval_seeds,
    )
    .map_err(|e| e.to_string())?;

    ctx.write_json(
        "selection.json",
        &SelectionArtifact {
            phi_star,
            rank_known_policies: known.len(),
            chosen_candidate: chosen,
            chosen_actions: group[0].actions().to_vec(),
            provenance: ctx.provenance.clone(),
        },
    )
}

fn verify_bounds(ctx: &Context) -> StageResult<()> {
    let v = ctx.section(&ctx.cfg.verify, "verify")?;
    let bound = match v.bound.as_str() {
        "L1" => BoundId::L1,
        "L2" => BoundId::L2,
        "L6" => BoundId::L6,
        "L7" => BoundId::L7,
        "L4" | "CoverageL4" | "coverage" => BoundId::CoverageL4,
        other => {
            return Err(format!(
                "verify.bound {other:?} must be one of L1, L2, L6, L7, CoverageL4"
            ))
        }
    };
    let cfg = VerifierConfig {
        bound,
        num_states: v.num_states,
        num_actions: v.num_actions,
        trials: v.trials,
        seed: derive_seed(ctx.seed, "verify", 0),
        gamma: v.gamma,
        ell: v.ell,
        m: v.m,
        expert_count: v.expert_count,
        nu: v.nu,
        delta: v.delta,
    };
    let report = verify_bound(&cfg).map_err(|e| e.to_string())?;
    ctx.write_json(
        "verify_report.json",
        &VerifyArtifact {
            report: &report,
            provenance: &ctx.provenance,
        },
    )
}

fn report(ctx: &Context) -> StageResult<()> {
    let stats_cfg = ctx.section(&ctx.cfg.stats, "stats")?;
    let tasks: Vec<Vec<f64>> = if !stats_cfg.scores.is_empty() {
        stats_cfg.scores.clone()
    } else {
        let art: OpeArtifact = ctx.read_json("ope_results.json")?;
        let scores: Vec<f64> = art
            .cells
            .iter()
            .filter_map(|c| c.mean_initial_value)
            .collect();
        if scores.is_empty() {
            return Err("no convergent evaluation scores to report".into());
        }
        vec![scores]
    };
    let ci = stratified_bootstrap_iqm_ci(
        &tasks,
        stats_cfg.n_boot,
        stats_cfg.level,
        derive_seed(ctx.seed, "report", 0),
    )
    .map_err(|e| e.to_string())?;
    ctx.write_json(
        "report_summary.json",
        &ReportSummary {
            iqm_point: ci.point,
            iqm_lo: ci.lo,
            iqm_hi: ci.hi,
            level: ci.level,
            n_boot: ci.n_boot,
            tasks: tasks.len(),
            provenance: &ctx.provenance,
        },
    )?;

    let pooled: Vec<f64> = tasks.iter().flatten().copied().collect();
    let thresholds = if stats_cfg.thresholds.is_empty() {
        let lo = pooled.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (0..=20)
            .map(|i| lo + (hi - lo) * i as f64 / 20.0)
            .collect()
    } else {
        stats_cfg.thresholds.clone()
    };
    let curve = performance_profile(&pooled, &thresholds);
    ctx.write_text("profile.csv", &profile_to_csv(&curve))
}

