//! Subcommand implementations.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;
use tierroute_core::backends::{
    Backend, BackendError, BackendRegistry, Candidate, GraphRagSpec, HttpBackend, LlmSpec, SimWorld, Tier, WorldScript,
};
use tierroute_core::difficulty::{profile_dataset, DifficultyError, DifficultyProfile, ProfileStore};
use tierroute_core::harness::{
    evaluate, featurize_all, load_dataset, run_episode, synth_world, AppConfig, ForcedRouter, HarnessError, OracleRouter,
    Paths, PolicyRouter, QuestionRecord, Router, ScoreContext, UniformRouter,
};
use tierroute_core::policy::{
    clone_from_traces, featurize, train_stage, train_two_stage, Architecture, Checkpoint, CloneExample, PolicyError,
    PolicySnapshot, TrainConfig, TrainEnv, TrainLogRecord, FEATURE_DIM,
};
use tierroute_core::protocol::ProtocolError;
use tierroute_core::reward::{RewardError, Stage};
use tierroute_core::seed::rng_for;
use tierroute_core::traces::{read_corpus, synthesize_corpus, validate_trace, write_corpus, CorpusConfig, TraceError};
use tracing::info;

use crate::{ArchArg, BuiltinRouter, CandidateKind, Cli, Command, Global, RegistryAction, RouterArgs, TierArg};

/// One-line JSON error record written to stderr on failure.
pub fn error_record(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn variant_name(debug: String) -> String {
    debug.split(|c: char| !c.is_alphanumeric() && c != '_').next().unwrap_or("Error").to_string()
}

/// Variant name of the first library error in the chain.
pub fn error_kind(e: &anyhow::Error) -> String {
    for cause in e.chain() {
        macro_rules! try_kind {
            ($($t:ty),*) => {$(
                if let Some(x) = cause.downcast_ref::<$t>() {
                    return variant_name(format!("{x:?}"));
                }
            )*};
        }
        try_kind!(PolicyError, HarnessError, BackendError, DifficultyError, TraceError, ProtocolError, RewardError);
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "Io".to_string();
        }
    }
    "Error".to_string()
}

/// Config, candidate pool and backend shared by every subcommand.
struct Workspace {
    cfg: AppConfig,
    global_world: Option<PathBuf>,
    http: bool,
    limit: Option<usize>,
    registry: BackendRegistry,
}

impl Workspace {
    fn load(global: &Global) -> Result<Self> {
        let mut cfg = match &global.config {
            Some(path) => AppConfig::load(path)?,
            None => AppConfig::default(),
        };
        if let Some(seed) = global.seed {
            cfg = cfg.with_seed(seed);
        }
        let registry = match &cfg.paths.registry {
            Some(path) if path.exists() => BackendRegistry::load(path)?,
            _ => BackendRegistry::standard(),
        };
        Ok(Workspace { cfg, global_world: global.world.clone(), http: global.http, limit: global.limit, registry })
    }

    fn world_path(&self) -> Option<&Path> {
        self.global_world.as_deref().or(self.cfg.paths.world.as_deref())
    }

    fn sim_world(&self) -> Result<SimWorld> {
        let path = self.world_path().ok_or_else(|| HarnessError::Config("no world configured; pass --world".into()))?;
        Ok(SimWorld::new(WorldScript::load(path)?, self.registry.clone())?)
    }

    fn backend(&self) -> Result<Backends> {
        if self.http {
            Ok(Backends::Http(HttpBackend::new(self.registry.clone(), self.cfg.http.clone())?))
        } else {
            Ok(Backends::Sim(self.sim_world()?))
        }
    }

    fn dataset(&self) -> Result<Vec<QuestionRecord>> {
        let path = self.cfg.paths.dataset.as_deref().ok_or_else(|| HarnessError::Config("no dataset configured".into()))?;
        Ok(load_dataset(path, self.limit, self.cfg.eval.seed)?)
    }

    fn profiles(&self) -> Result<BTreeMap<String, DifficultyProfile>> {
        match &self.cfg.paths.profiles {
            Some(path) if path.exists() => Ok(ProfileStore::load(path)?),
            _ => Ok(BTreeMap::new()),
        }
    }
}

enum Backends {
    Sim(SimWorld),
    Http(HttpBackend),
}

impl Backends {
    fn as_dyn(&self) -> &dyn Backend {
        match self {
            Backends::Sim(w) => w,
            Backends::Http(h) => h,
        }
    }

    fn sim(&self) -> Option<&SimWorld> {
        match self {
            Backends::Sim(w) => Some(w),
            Backends::Http(_) => None,
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Workspace::load(&cli.global)?;
    match &cli.command {
        Command::Synth { out } => synth(&ctx, out),
        Command::Profile { out } => profile(&ctx, out.as_deref()),
        Command::Train { from, arch, no_clone, out } => train(&ctx, cli.global.stage, from.as_deref(), *arch, *no_clone, out.as_deref()),
        Command::Eval { router, out } => eval(&ctx, router, out.as_deref()),
        Command::ValidateTrace { file } => validate(&ctx, file),
        Command::Simulate { question, router } => simulate(&ctx, question, router),
        Command::Registry { action } => registry(&ctx, action),
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item)?);
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn synth(ctx: &Workspace, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let world = synth_world(&ctx.registry, &ctx.cfg.synth);
    write_jsonl(&out.join("dataset.jsonl"), &world.dataset)?;
    world.script.save(&out.join("world.json"))?;
    std::fs::write(out.join("levels.json"), serde_json::to_string_pretty(&world.levels)?)?;
    ctx.registry.save(&out.join("registry.toml"))?;

    let sim = SimWorld::new(world.script.clone(), ctx.registry.clone())?;
    let reflection = world.dataset.len() / 10;
    let corpus =
        synthesize_corpus(&world.dataset, &sim, &ctx.registry, &CorpusConfig { reflection, seed: ctx.cfg.synth.seed, ..Default::default() })?;
    let manifest = write_corpus(&out.join("traces.jsonl"), &corpus)?;

    let mut cfg = ctx.cfg.clone();
    cfg.paths = Paths {
        registry: Some("registry.toml".into()),
        world: Some("world.json".into()),
        dataset: Some("dataset.jsonl".into()),
        profiles: Some("profiles.jsonl".into()),
        traces: Some("traces.jsonl".into()),
        checkpoints: Some("checkpoints".into()),
    };
    cfg.train.stage2.group_size = 8;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    print_json(&json!({
        "out": out.display().to_string(),
        "questions": world.dataset.len(),
        "traces": { "general": manifest.general, "reflection": manifest.reflection },
    }))
}

fn profile(ctx: &Workspace, out: Option<&Path>) -> Result<()> {
    let path = out
        .or(ctx.cfg.paths.profiles.as_deref())
        .ok_or_else(|| HarnessError::Config("no profile store configured; pass --out".into()))?;
    let dataset = ctx.dataset()?;
    let backend = ctx.backend()?;
    let profiles = match profile_dataset(&dataset, &ctx.registry.llms, backend.as_dyn(), &ctx.cfg.profile) {
        Ok(p) => p,
        Err(DifficultyError::PartialProfileSet { profiles, failed }) => {
            ProfileStore::append(path, &profiles)?;
            return Err(DifficultyError::PartialProfileSet { profiles, failed }.into());
        }
        Err(e) => return Err(e.into()),
    };
    ProfileStore::append(path, &profiles)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &profiles {
        *counts.entry(p.difficulty.as_str()).or_default() += 1;
    }
    info!(store = %path.display(), n = profiles.len(), "profiles appended");
    print_json(&json!({ "store": path.display().to_string(), "profiled": profiles.len(), "labels": counts }))
}

fn arch(a: ArchArg) -> Architecture {
    match a {
        ArchArg::Hierarchical => Architecture::Hierarchical,
        ArchArg::Joint => Architecture::Joint,
    }
}

/// Clone examples from the configured trace corpus. Records whose question
/// is not in the dataset are featurized from their text.
fn clone_examples(path: &Path, dataset: &[QuestionRecord], features: &[Vec<f64>]) -> Result<Vec<CloneExample>> {
    let by_id: BTreeMap<&str, &Vec<f64>> = dataset.iter().map(|q| q.id.as_str()).zip(features).collect();
    Ok(read_corpus(path)?
        .into_iter()
        .map(|r| {
            let features = match r.question_id.as_deref().and_then(|id| by_id.get(id)) {
                Some(f) => (*f).clone(),
                None => featurize(&QuestionRecord::new("trace", &r.question, &["-"])),
            };
            CloneExample { features, trace: r.trace_text }
        })
        .collect())
}

fn load_policy(path: &Path, registry: &BackendRegistry) -> Result<PolicySnapshot> {
    let mut policy = Checkpoint::load(path)?.policy;
    policy.extend_for(registry)?;
    Ok(policy)
}

fn train(ctx: &Workspace, stage: Option<u8>, from: Option<&Path>, arch_arg: ArchArg, no_clone: bool, out: Option<&Path>) -> Result<()> {
    let final_path = match (out, &ctx.cfg.paths.checkpoints) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(dir)) => dir.join("final.json"),
        (None, None) => bail!(HarnessError::Config("no checkpoint directory configured; pass --out".into())),
    };
    let dataset = ctx.dataset()?;
    let features = featurize_all(&dataset);
    let profiles = ctx.profiles()?;
    if stage == Some(2) || stage.is_none() {
        if let Some(q) = dataset.iter().find(|q| !profiles.contains_key(&q.id)) {
            return Err(PolicyError::MissingProfile(q.id.clone()).into());
        }
    }
    let backend = ctx.backend()?;

    let start = match (from, &ctx.cfg.paths.traces) {
        (Some(path), _) => load_policy(path, &ctx.registry)?,
        (None, Some(traces)) if !no_clone => {
            let examples = clone_examples(traces, &dataset, &features)?;
            let clone_cfg = tierroute_core::policy::CloneConfig { arch: arch(arch_arg), ..ctx.cfg.clone.clone() };
            let (policy, report) = clone_from_traces(&examples, &ctx.registry, &clone_cfg)?;
            info!(used = report.used, skipped = report.skipped, "cloned from traces");
            policy
        }
        _ => PolicySnapshot::new(arch(arch_arg), &ctx.registry, FEATURE_DIM),
    };

    if let Some(dir) = &ctx.cfg.paths.checkpoints {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let env = TrainEnv {
        dataset: &dataset,
        features: &features,
        profiles: &profiles,
        world: backend.as_dyn(),
        registry: &ctx.registry,
        reward: &ctx.cfg.reward,
        checkpoint_dir: ctx.cfg.paths.checkpoints.as_deref(),
    };
    let cfg1 = TrainConfig { stage: Stage::Stage1, ..ctx.cfg.train.stage1.clone() };
    let cfg2 = TrainConfig { stage: Stage::Stage2, ..ctx.cfg.train.stage2.clone() };
    let mut log: Vec<TrainLogRecord> = Vec::new();
    let (policy, last_stage) = match stage {
        Some(1) => (train_stage(&start, &env, &cfg1, &mut log)?, Stage::Stage1),
        Some(_) => (train_stage(&start, &env, &cfg2, &mut log)?, Stage::Stage2),
        None => {
            let result = train_two_stage(&start, &env, &cfg1, &cfg2)?;
            log = result.log;
            (result.stage2, Stage::Stage2)
        }
    };
    let steps = log.iter().filter(|r| r.stage == last_stage).count();
    let seed = if last_stage == Stage::Stage1 { cfg1.seed } else { cfg2.seed };
    Checkpoint { policy, registry_fingerprint: ctx.registry.fingerprint(), stage: last_stage, step: steps, seed }.save(&final_path)?;
    if let Some(dir) = &ctx.cfg.paths.checkpoints {
        write_jsonl(&dir.join("train_log.jsonl"), &log)?;
    }
    let last = log.last();
    print_json(&json!({
        "checkpoint": final_path.display().to_string(),
        "steps": log.len(),
        "final_em": last.map(|r| r.em),
        "final_reward": last.map(|r| r.mean_reward),
        "final_tier_share": last.map(|r| &r.tier_share),
    }))
}

/// The router named by the flags; the policy is held by the caller.
fn build_router<'a>(args: &RouterArgs, policy: Option<&'a PolicySnapshot>, backend: &'a Backends) -> Result<Box<dyn Router + 'a>> {
    if let Some(policy) = policy {
        return Ok(Box::new(PolicyRouter { policy, temperature: args.temperature }));
    }
    if let Some(spec) = &args.route {
        return Ok(Box::new(ForcedRouter::parse(spec).map_err(HarnessError::Config)?));
    }
    match args.router {
        Some(BuiltinRouter::Uniform) => Ok(Box::new(UniformRouter)),
        Some(BuiltinRouter::Oracle) => {
            let world = backend.sim().ok_or_else(|| HarnessError::Config("the oracle router needs the scripted world".into()))?;
            Ok(Box::new(OracleRouter { world }))
        }
        None => Err(anyhow!(HarnessError::Config("choose a router with --policy, --route or --router".into()))),
    }
}

fn eval(ctx: &Workspace, args: &RouterArgs, out: Option<&Path>) -> Result<()> {
    let dataset = ctx.dataset()?;
    let features = featurize_all(&dataset);
    let backend = ctx.backend()?;
    let policy = args.policy.as_deref().map(|p| load_policy(p, &ctx.registry)).transpose()?;
    let router = build_router(args, policy.as_ref(), &backend)?;
    let report = evaluate(router.as_ref(), &dataset, &features, &ctx.registry, backend.as_dyn(), &ctx.cfg.eval)?;
    if let Some(path) = out {
        report.write_jsonl(path)?;
    }
    print!("{}", report.table());
    Ok(())
}

fn validate(ctx: &Workspace, file: &Path) -> Result<()> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let report = validate_trace(&text, &ctx.registry);
    print_json(&json!({ "clean": report.is_clean(), "report": report }))
}

fn simulate(ctx: &Workspace, question_id: &str, args: &RouterArgs) -> Result<()> {
    let dataset = ctx.dataset()?;
    let q = dataset
        .iter()
        .find(|q| q.id == question_id)
        .ok_or_else(|| HarnessError::Config(format!("question '{question_id}' is not in the dataset")))?;
    let backend = ctx.backend()?;
    let policy = args.policy.as_deref().map(|p| load_policy(p, &ctx.registry)).transpose()?;
    let router = build_router(args, policy.as_ref(), &backend)?;
    let score = ScoreContext { stage: Stage::Stage1, profile: None, reward: &ctx.cfg.reward };
    let mut rng = rng_for(ctx.cfg.eval.seed, &["eval", &q.id]);
    let ep = run_episode(router.as_ref(), &ctx.registry, backend.as_dyn(), q, &featurize(q), ctx.cfg.eval.max_turns, score, &mut rng)?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "question: {}", q.question)?;
    for (i, turn) in ep.trajectory.turns.iter().enumerate() {
        writeln!(out, "-- turn {}", i + 1)?;
        for seg in ep.trajectory.turn(*turn) {
            let tag = seg.kind.tag().unwrap_or("text");
            writeln!(out, "<{tag}> {}", seg.content.trim())?;
        }
    }
    let summary = json!({
        "question_id": ep.question_id,
        "search_turns": ep.search_turns,
        "actions": ep.actions,
        "invoked_tiers": ep.invoked_tiers,
        "em": ep.em,
        "f1": ep.f1,
        "reward": ep.reward,
    });
    writeln!(out, "{summary}")?;
    Ok(())
}

fn tier(t: TierArg) -> Tier {
    match t {
        TierArg::Small => Tier::Small,
        TierArg::Medium => Tier::Medium,
        TierArg::Large => Tier::Large,
    }
}

fn registry(ctx: &Workspace, action: &RegistryAction) -> Result<()> {
    let RegistryAction::Add { kind, id, tier: t, description, endpoint, out } = action;
    let candidate = match kind {
        CandidateKind::Graphrag => {
            let mut spec = GraphRagSpec::new(id.clone());
            spec.endpoint = endpoint.clone();
            if let Some(d) = description {
                spec = spec.with_description(d.clone());
            }
            Candidate::GraphRag(spec)
        }
        CandidateKind::Llm => {
            let t = t.ok_or_else(|| HarnessError::Config("an llm needs --tier".into()))?;
            let mut spec = LlmSpec::new(id.clone(), tier(t));
            spec.endpoint = endpoint.clone();
            if let Some(d) = description {
                spec = spec.with_description(d.clone());
            }
            Candidate::Llm(spec)
        }
    };
    let next = ctx.registry.with_candidate(candidate)?;
    let path = out
        .as_deref()
        .or(ctx.cfg.paths.registry.as_deref())
        .ok_or_else(|| HarnessError::Config("no registry path configured; pass --out".into()))?;
    next.save(path)?;
    print_json(&json!({
        "registry": path.display().to_string(),
        "graphrags": next.graphrag_ids(),
        "llms": next.llm_ids(),
        "fingerprint": next.fingerprint(),
    }))
}
