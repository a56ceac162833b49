//! The `promptpolicy` command: one stage per invocation, stages talk only
//! through files under `paths.work_dir`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backend::{generate_synthetic_world, Backend, BackendKind, HttpBackend, SimOracle, SimWorld};
use crate::config::{load_config, RunConfig};
use crate::eval::{records_csv, run_evaluation, train_policy, training_points, EvalContext, EvalError, EvalMode, EvalReport, EvalRun};
use crate::ingest::{
    chronological_split, filter_sparse, parse_checkins, read_split, segment_all, write_checkins_tsv, write_split,
    ColumnMap, DatasetSplit,
};
use crate::kg::{build_world_graph, load_profiles, load_snapshot, save_profiles, save_snapshot, Kg, ProfileFile};
use crate::meta::{derive_seed, ArtifactMeta};
use crate::policy::{action_space, state_dim, ActionSpace, Pipeline, PolicyError, PosteriorState};
use crate::{Error, Result};

const WORLD_STREAM: u64 = 1;
const GRID_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;
const ORACLE_STREAM: u64 = 5;

#[derive(Debug, Parser)]
#[command(name = "promptpolicy", version, about = "Prompt-policy next-POI recommendation pipeline")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set reward.tau=3000` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads for episode execution.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    WoPlc,
    WoRtnl,
    Sensitivity,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => EvalMode::Full,
            ModeArg::WoPlc => EvalMode::WoPlc,
            ModeArg::WoRtnl => EvalMode::WoRtnl,
            ModeArg::Sensitivity => EvalMode::Sensitivity,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, filter, segment and split raw check-ins.
    Ingest,
    /// Build the knowledge graph and user profiles from the training split.
    BuildKg,
    /// Train the prompt policy on training decision points.
    Train,
    /// Evaluate one mode on the test split.
    Evaluate {
        #[arg(long, value_enum, default_value = "full")]
        mode: ModeArg,
    },
    /// Full policy against the two ablated arms.
    Ablate,
    /// Sweep the rationale cap over the configured grid.
    Sensitivity,
    /// Generate a synthetic world and its check-ins.
    Simulate,
}

/// Parses arguments, runs the stage, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut overrides = Vec::new();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    overrides.extend(cli.set.iter().cloned());
    let cfg = match load_config(cli.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(j) = cli.jobs {
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    match dispatch(&cli.command, &cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Simulate => simulate(cfg),
        Command::Ingest => ingest(cfg),
        Command::BuildKg => build_kg(cfg),
        Command::Train => train(cfg),
        Command::Evaluate { mode } => evaluate(cfg, &[(*mode).into()], EvalMode::from(*mode).name()),
        Command::Ablate => evaluate(cfg, &[EvalMode::Full, EvalMode::WoPlc, EvalMode::WoRtnl], "ablation"),
        Command::Sensitivity => evaluate(cfg, &[EvalMode::Sensitivity], "sensitivity"),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    meta: ArtifactMeta,
    world: SimWorld,
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let mut wc = cfg.world.clone();
    wc.seed = derive_seed(cfg.seed, WORLD_STREAM);
    let world = generate_synthetic_world(&wc, &cfg.vocab)?;
    ensure_dir(&cfg.paths.work_dir)?;
    let path = cfg.paths.world();
    let file = WorldFile { meta: cfg.meta(), world };
    write_file(&path, serde_json::to_vec(&file).expect("world serializes"))?;
    let tsv = cfg.paths.sim_checkins();
    let mut buf = Vec::new();
    write_checkins_tsv(&mut buf, &file.world.checkins).map_err(|e| Error::io(&tsv, e))?;
    write_file(&tsv, buf)?;
    eprintln!(
        "simulate: {} users, {} POIs, {} check-ins -> {}",
        file.world.users.len(),
        file.world.pois.len(),
        file.world.checkins.len(),
        cfg.paths.work_dir.display()
    );
    Ok(())
}

fn load_world(cfg: &RunConfig) -> Result<SimWorld> {
    let path = cfg.paths.world();
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let file: WorldFile = serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e.to_string()))?;
    Ok(file.world)
}

/// Runs the preprocessing protocol over a parsed check-in stream.
pub fn preprocess(cfg: &RunConfig, checkins: Vec<crate::ingest::CheckIn>) -> Result<DatasetSplit> {
    let ic = &cfg.ingest;
    let kept = filter_sparse(checkins, ic.min_poi_visits, ic.min_user_checkins);
    let trajectories = segment_all(&kept, ic.window_h, ic.window_mode);
    Ok(chronological_split(trajectories, ic.split, ic.scope)?)
}

fn ingest(cfg: &RunConfig) -> Result<()> {
    let (path, columns) = match &cfg.paths.raw {
        Some(p) => (p.clone(), cfg.ingest.columns.clone()),
        None => (cfg.paths.sim_checkins(), ColumnMap::compact()),
    };
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let report = parse_checkins(file, &columns)?;
    if report.rejected > 0 {
        eprintln!("ingest: rejected {} malformed rows {:?}", report.rejected, report.reasons);
    }
    let split = preprocess(cfg, report.checkins)?;
    write_split(&cfg.paths.split_dir(), &split, &cfg.meta())?;
    eprintln!("ingest: {} train / {} val / {} test trajectories", split.train.len(), split.val.len(), split.test.len());
    Ok(())
}

fn build_kg(cfg: &RunConfig) -> Result<()> {
    let split = read_split(&cfg.paths.split_dir())?;
    let bundle = build_world_graph(&split, &cfg.vocab, &cfg.kg, derive_seed(cfg.seed, GRID_STREAM))?;
    let meta = cfg.meta();
    save_snapshot(&cfg.paths.kg(), &bundle.kg, &meta, cfg.kg.r_near_km)?;
    save_profiles(&cfg.paths.profiles(), &ProfileFile { meta, grids: bundle.grids, profiles: bundle.profiles })?;
    eprintln!("build-kg: {} entities, {} triples", bundle.kg.entity_count(), bundle.kg.triple_count());
    Ok(())
}

/// Backend named by the config. The simulated oracle needs the world file.
pub fn make_backend(cfg: &RunConfig, world: Option<&SimWorld>) -> Result<Box<dyn Backend>> {
    match cfg.backend.kind {
        BackendKind::Http => Ok(Box::new(HttpBackend::new(cfg.backend.clone())?)),
        BackendKind::Sim => {
            let world = world.ok_or_else(|| Error::format(cfg.paths.world(), "sim backend needs a simulated world"))?;
            let mut params = cfg.oracle.clone();
            params.seed ^= derive_seed(cfg.seed, ORACLE_STREAM);
            Ok(Box::new(SimOracle::new(world, params, cfg.vocab.clone())))
        }
    }
}

struct Loaded {
    split: DatasetSplit,
    kg: Kg,
    profiles: ProfileFile,
    world: Option<SimWorld>,
    space: ActionSpace,
}

fn load_stage_inputs(cfg: &RunConfig) -> Result<Loaded> {
    let split = read_split(&cfg.paths.split_dir())?;
    let (kg, _) = load_snapshot(&cfg.paths.kg())?;
    let profiles = load_profiles(&cfg.paths.profiles())?;
    let world = match cfg.backend.kind {
        BackendKind::Sim => Some(load_world(cfg)?),
        BackendKind::Http => None,
    };
    let space = action_space(&cfg.policy.grid)?;
    Ok(Loaded { split, kg, profiles, world, space })
}

pub fn feature_dim(cfg: &RunConfig, space: &ActionSpace) -> usize {
    state_dim(&cfg.vocab, space) + space.dim()
}

fn train(cfg: &RunConfig) -> Result<()> {
    let l = load_stage_inputs(cfg)?;
    let backend = make_backend(cfg, l.world.as_ref())?;
    let pipeline = Pipeline::new(
        &l.kg,
        &l.profiles.profiles,
        &cfg.vocab,
        &cfg.discovery,
        &cfg.reward,
        &l.space,
        backend.as_ref(),
        cfg.seed,
    )
    .with_distractors(cfg.evidence.distractors);
    let d = feature_dim(cfg, &l.space);
    let mut posterior = PosteriorState::new(d, cfg.policy.lambda_prior, cfg.policy.sigma2)?;
    let points = training_points(&l.split);
    eprintln!("train: {} decision points, {} actions, d = {d}", points.len(), l.space.len());
    let records =
        train_policy(&pipeline, &mut posterior, &points, derive_seed(cfg.seed, TRAIN_STREAM), cfg.policy.progress_every);
    let meta = cfg.meta();
    posterior.save(&cfg.paths.posterior(), &json!({ "meta": meta, "episodes": records.len() }))?;
    let tagged: Vec<(String, _)> = records.into_iter().map(|r| ("train".to_string(), r)).collect();
    write_file(&cfg.paths.train_log(), records_csv(&tagged))?;
    eprintln!("train: {} updates -> {}", posterior.updates(), cfg.paths.posterior().display());
    Ok(())
}

fn load_posterior(cfg: &RunConfig, d: usize) -> Result<Option<PosteriorState>> {
    let path = cfg.paths.posterior();
    if !path.exists() {
        return Ok(None);
    }
    let (p, _) = PosteriorState::load(&path)?;
    if p.dim() != d {
        return Err(PolicyError::Dimension { expected: d, got: p.dim() }.into());
    }
    Ok(Some(p))
}

fn evaluate(cfg: &RunConfig, modes: &[EvalMode], name: &str) -> Result<()> {
    let d = feature_dim(cfg, &action_space(&cfg.policy.grid)?);
    let posterior = load_posterior(cfg, d)?;
    if posterior.is_none() && modes.iter().any(|m| *m != EvalMode::WoPlc) {
        return Err(EvalError::MissingPosterior.into());
    }
    let l = load_stage_inputs(cfg)?;
    let backend = make_backend(cfg, l.world.as_ref())?;
    let pipeline = Pipeline::new(
        &l.kg,
        &l.profiles.profiles,
        &cfg.vocab,
        &cfg.discovery,
        &cfg.reward,
        &l.space,
        backend.as_ref(),
        cfg.seed,
    )
    .with_distractors(cfg.evidence.distractors);
    let ctx = EvalContext {
        pipeline: &pipeline,
        split: &l.split,
        config: &cfg.eval,
        seed: derive_seed(cfg.seed, EVAL_STREAM),
    };
    let mut run = EvalRun::default();
    for &m in modes {
        eprintln!("evaluate: {}", m.name());
        run.extend(run_evaluation(m, &ctx, posterior.as_ref())?);
    }
    let report = EvalReport { meta: cfg.meta(), rows: run.rows };
    let dir = cfg.paths.reports();
    ensure_dir(&dir)?;
    write_file(&dir.join(format!("{name}.json")), report.to_json())?;
    let md = report.to_markdown();
    write_file(&dir.join(format!("{name}.md")), &md)?;
    write_file(&dir.join(format!("{name}_episodes.csv")), records_csv(&run.records))?;
    eprint!("{md}");
    Ok(())
}

/// The whole simulate → ingest → build-kg → train → evaluate chain on the
/// synthetic world, in memory. Seeds follow the same streams as the stages.
pub fn simulate_and_evaluate(cfg: &RunConfig, modes: &[EvalMode]) -> Result<EvalReport> {
    let mut wc = cfg.world.clone();
    wc.seed = derive_seed(cfg.seed, WORLD_STREAM);
    let world = generate_synthetic_world(&wc, &cfg.vocab)?;
    let split = preprocess(cfg, world.checkins.clone())?;
    let bundle = build_world_graph(&split, &cfg.vocab, &cfg.kg, derive_seed(cfg.seed, GRID_STREAM))?;
    let space = action_space(&cfg.policy.grid)?;
    let backend = make_backend(cfg, Some(&world))?;
    let pipeline = Pipeline::new(
        &bundle.kg,
        &bundle.profiles,
        &cfg.vocab,
        &cfg.discovery,
        &cfg.reward,
        &space,
        backend.as_ref(),
        cfg.seed,
    )
    .with_distractors(cfg.evidence.distractors);
    let mut posterior = PosteriorState::new(feature_dim(cfg, &space), cfg.policy.lambda_prior, cfg.policy.sigma2)?;
    if modes.iter().any(|m| *m != EvalMode::WoPlc) {
        let points = training_points(&split);
        train_policy(&pipeline, &mut posterior, &points, derive_seed(cfg.seed, TRAIN_STREAM), cfg.policy.progress_every);
    }
    let ctx = EvalContext { pipeline: &pipeline, split: &split, config: &cfg.eval, seed: derive_seed(cfg.seed, EVAL_STREAM) };
    let mut run = EvalRun::default();
    for &m in modes {
        run.extend(run_evaluation(m, &ctx, Some(&posterior))?);
    }
    Ok(EvalReport { meta: cfg.meta(), rows: run.rows })
}
