use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cohort::{split_cohorts, CohortAxis, CohortLabel, CohortSpec};
use super::report::ModeReport;
use super::{EvalConfig, EvalError};
use crate::backend::CountingBackend;
use crate::discovery::Candidate;
use crate::ingest::{DatasetSplit, Trajectory};
use crate::kg::Profile;
use crate::meta::{fnv1a, mix64};
use crate::policy::{
    discover_for, run_episode, train_episode, ActionRule, DecisionPoint, EpisodeRecord, Pipeline, PosteriorState,
    PromptAction,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Full,
    WoPlc,
    WoRtnl,
    Sensitivity,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Full => "full",
            EvalMode::WoPlc => "wo_plc",
            EvalMode::WoRtnl => "wo_rtnl",
            EvalMode::Sensitivity => "sensitivity",
        }
    }
}

pub struct EvalContext<'a> {
    pub pipeline: &'a Pipeline<'a>,
    pub split: &'a DatasetSplit,
    pub config: &'a EvalConfig,
    pub seed: u64,
}

/// Report rows plus the per-episode records behind them, tagged by row label.
#[derive(Debug, Clone, Default)]
pub struct EvalRun {
    pub rows: Vec<ModeReport>,
    pub records: Vec<(String, EpisodeRecord)>,
}

impl EvalRun {
    pub fn extend(&mut self, other: EvalRun) {
        self.rows.extend(other.rows);
        self.records.extend(other.records);
    }
}

/// Every prefix of every trajectory: the first `step` check-ins are shown
/// and check-in `step` is the target.
pub fn decision_points(trajectories: &[Trajectory]) -> Vec<DecisionPoint> {
    let mut out = Vec::new();
    for t in trajectories {
        for step in 1..t.checkins.len() {
            out.push(DecisionPoint {
                user_id: t.user_id.clone(),
                trajectory_id: t.id.clone(),
                step,
                shown: t.checkins[..step].to_vec(),
                next: t.checkins[step].clone(),
            });
        }
    }
    out
}

/// Training decision points in the order their targets happened.
pub fn training_points(split: &DatasetSplit) -> Vec<DecisionPoint> {
    let mut pts = decision_points(&split.train);
    pts.sort_by(|a, b| {
        a.next
            .utc_time
            .cmp(&b.next.utc_time)
            .then_with(|| a.user_id.cmp(&b.user_id))
            .then_with(|| a.trajectory_id.cmp(&b.trajectory_id))
            .then_with(|| a.step.cmp(&b.step))
    });
    pts
}

/// Sequential Thompson training over `points`; returns one record per episode.
pub fn train_policy(
    pipeline: &Pipeline<'_>,
    posterior: &mut PosteriorState,
    points: &[DecisionPoint],
    seed: u64,
    progress_every: usize,
) -> Vec<EpisodeRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut previous: HashMap<String, PromptAction> = HashMap::new();
    let mut records = Vec::with_capacity(points.len());
    let mut window = 0.0;
    for (i, dp) in points.iter().enumerate() {
        let rec = train_episode(pipeline, posterior, dp, previous.get(&dp.user_id), &mut rng);
        if let Some(a) = rec.action {
            previous.insert(dp.user_id.clone(), a);
        }
        window += rec.reward.map_or(0.0, |r| r.r);
        if progress_every > 0 && (i + 1) % progress_every == 0 {
            eprintln!("train: {}/{} episodes, mean reward {:.4}", i + 1, points.len(), window / progress_every as f64);
            window = 0.0;
        }
        records.push(rec);
    }
    records
}

/// KG-only ranking: weighted sum of negative normalized distance and the
/// user's training share of the candidate's category. Stable on ties.
pub fn heuristic_rank(candidates: &[Candidate], profile: &Profile, r_bar_km: f64, distance_weight: f64) -> Vec<String> {
    let score = |c: &Candidate| {
        let share = profile.category_share.get(&c.category).copied().unwrap_or(0.0);
        distance_weight * (-c.distance_km / r_bar_km) + (1.0 - distance_weight) * share
    };
    let mut scored: Vec<(f64, &Candidate)> = candidates.iter().map(|c| (score(c), c)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().map(|(_, c)| c.poi_id.clone()).collect()
}

fn heuristic_episode(p: &Pipeline<'_>, dp: &DecisionPoint, distance_weight: f64) -> EpisodeRecord {
    let Some(profile) = p.profiles.get(&dp.user_id) else {
        return EpisodeRecord::skipped(dp, "user has no profile");
    };
    let candidates = match discover_for(p, dp) {
        Ok(c) if c.is_empty() => return EpisodeRecord::skipped(dp, "empty candidate set"),
        Ok(c) => c,
        Err(e) => return EpisodeRecord::skipped(dp, e.to_string()),
    };
    let ranking = heuristic_rank(&candidates, profile, p.discovery.r_bar_km, distance_weight);
    let mut rec = EpisodeRecord::skipped(dp, "");
    rec.skipped = None;
    rec.n_candidates = candidates.len();
    rec.candidate_recall = candidates.iter().any(|c| c.poi_id == dp.next.poi_id);
    rec.rank = ranking.iter().position(|id| *id == dp.next.poi_id).map(|i| i + 1);
    rec.ranking = Some(ranking);
    rec
}

fn episode_rng(seed: u64, dp: &DecisionPoint) -> ChaCha8Rng {
    let h = fnv1a(&[
        &seed.to_le_bytes(),
        dp.user_id.as_bytes(),
        dp.trajectory_id.as_bytes(),
        &(dp.step as u64).to_le_bytes(),
    ]);
    ChaCha8Rng::seed_from_u64(mix64(h))
}

#[derive(Clone, Copy)]
enum Arm {
    Policy(ActionRule),
    Heuristic,
}

struct Cohorts {
    activity: Option<BTreeMap<String, CohortLabel>>,
    length: Option<BTreeMap<String, CohortLabel>>,
}

#[allow(clippy::too_many_arguments)]
fn run_arm(
    ctx: &EvalContext<'_>,
    points: &[DecisionPoint],
    cohorts: &Cohorts,
    posterior: Option<&PosteriorState>,
    mode: EvalMode,
    label: String,
    m: Option<usize>,
    arm: Arm,
) -> Result<EvalRun, EvalError> {
    let counter = CountingBackend::new(ctx.pipeline.backend);
    let pipeline = ctx.pipeline.with_backend(&counter);
    let mut by_user: BTreeMap<&str, Vec<&DecisionPoint>> = BTreeMap::new();
    for dp in points {
        by_user.entry(dp.user_id.as_str()).or_default().push(dp);
    }
    let groups: Vec<Vec<&DecisionPoint>> = by_user.into_values().collect();
    let records: Vec<EpisodeRecord> = groups
        .par_iter()
        .map(|group| {
            let mut previous: Option<PromptAction> = None;
            let mut out = Vec::with_capacity(group.len());
            for dp in group {
                let rec = match arm {
                    Arm::Heuristic => heuristic_episode(&pipeline, dp, ctx.config.heuristic_distance_weight),
                    Arm::Policy(rule) => {
                        let post = posterior.expect("policy arms are only run with a posterior");
                        let mut rng = episode_rng(ctx.seed, dp);
                        run_episode(&pipeline, post, dp, rule, previous.as_ref(), &mut rng)
                    }
                };
                if rec.action.is_some() {
                    previous = rec.action;
                }
                out.push(rec);
            }
            out
        })
        .flatten()
        .collect();
    let row = ModeReport::from_records(
        &label,
        mode,
        m,
        &records,
        &ctx.config.ks,
        cohorts.activity.as_ref(),
        cohorts.length.as_ref(),
        counter.calls(),
    )?;
    Ok(EvalRun { rows: vec![row], records: records.into_iter().map(|r| (label.clone(), r)).collect() })
}

/// Runs one evaluation mode over the test split. `full`, `wo_rtnl` and
/// `sensitivity` need a trained posterior.
pub fn run_evaluation(
    mode: EvalMode,
    ctx: &EvalContext<'_>,
    posterior: Option<&PosteriorState>,
) -> Result<EvalRun, EvalError> {
    ctx.config.validate().map_err(EvalError::Config)?;
    if mode != EvalMode::WoPlc && posterior.is_none() {
        return Err(EvalError::MissingPosterior);
    }
    let mut points = decision_points(&ctx.split.test);
    if ctx.config.max_test_episodes > 0 {
        points.truncate(ctx.config.max_test_episodes);
    }
    if points.is_empty() {
        return Err(EvalError::NoEpisodes);
    }
    let spec = |axis| CohortSpec { axis, bottom_frac: ctx.config.cohort_bottom, top_frac: ctx.config.cohort_top };
    let cohorts = Cohorts {
        activity: split_cohorts(ctx.split, &spec(CohortAxis::UserActivity)).ok(),
        length: split_cohorts(ctx.split, &spec(CohortAxis::TrajectoryLength)).ok(),
    };
    let name = mode.name().to_string();
    match mode {
        EvalMode::Full => run_arm(ctx, &points, &cohorts, posterior, mode, name, None, Arm::Policy(ActionRule::Greedy)),
        EvalMode::WoPlc => run_arm(ctx, &points, &cohorts, posterior, mode, name, None, Arm::Heuristic),
        EvalMode::WoRtnl => {
            let m = ctx.config.wo_rtnl_m;
            run_arm(ctx, &points, &cohorts, posterior, mode, name, Some(m), Arm::Policy(ActionRule::RandomEvidence { m }))
        }
        EvalMode::Sensitivity => {
            let mut run = EvalRun::default();
            for &m in &ctx.config.sensitivity_ms {
                let label = format!("M={m}");
                run.extend(run_arm(
                    ctx,
                    &points,
                    &cohorts,
                    posterior,
                    mode,
                    label,
                    Some(m),
                    Arm::Policy(ActionRule::GreedyWithM(m)),
                )?);
            }
            Ok(run)
        }
    }
}
