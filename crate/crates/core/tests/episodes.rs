use std::collections::BTreeMap;

use tierroute_core::backends::{BackendRegistry, FailureMode, PairOdds, ScriptEntry, SimWorld, Tier, WorldScript};
use tierroute_core::exec::ExecMode;
use tierroute_core::harness::{
    evaluate, featurize_all, run_all, run_episode, EvalConfig, ForcedRouter, OracleRouter, QuestionRecord, ScoreContext,
    ScriptedRouter, UniformRouter,
};
use tierroute_core::protocol::SegmentKind::*;
use tierroute_core::reward::{FormatRule, RewardConfig, Stage};
use tierroute_core::seed::rng_for;

fn entry(answer: &str, pairs: Vec<(&str, Tier, f64)>) -> ScriptEntry {
    ScriptEntry {
        answer: answer.to_string(),
        evidence: format!("The record states {answer}."),
        wrong_answer: "unknown".into(),
        answerable_by: pairs.into_iter().map(|(g, tier, p)| PairOdds { graphrag: g.to_string(), tier, p }).collect(),
        direct: BTreeMap::new(),
        distractor: None,
    }
}

fn easy_world() -> (SimWorld, QuestionRecord) {
    let registry = BackendRegistry::standard();
    let pairs = Tier::ALL.iter().map(|&t| ("HippoRAG2", t, 1.0)).collect();
    let questions = [("bermuda".to_string(), entry("Cross-country skiing", pairs))].into_iter().collect();
    let world = SimWorld::new(WorldScript { failure_mode: FailureMode::Distractor, questions }, registry).unwrap();
    let q = QuestionRecord::new("bermuda", "Which sport did Bermuda compete in at the 2006 Winter Olympics?", &["Cross-country skiing"]);
    (world, q)
}

fn stage1(reward: &RewardConfig) -> ScoreContext<'_> {
    ScoreContext { stage: Stage::Stage1, profile: None, reward }
}

#[test]
fn forced_small_route_on_easy_question_matches_hand_trace() {
    let (world, q) = easy_world();
    let registry = world.registry().clone();
    let router = ForcedRouter::parse("HippoRAG2:Qwen2.5-7B-Instruct").unwrap();
    let reward = RewardConfig::default();
    let ep = run_episode(&router, &registry, &world, &q, &[1.0], 4, stage1(&reward), &mut rng_for(1, &["ep"])).unwrap();
    assert_eq!(ep.em, 1.0);
    assert_eq!(ep.invoked_tiers, vec![Tier::Small]);
    assert_eq!(ep.invoked_costs, vec![1]);
    assert_eq!(ep.search_turns, 1);
    let kinds: Vec<_> = ep.trajectory.segments.iter().map(|s| s.kind).collect();
    assert_eq!(kinds, vec![Think, GraphRag, Think, Llm, Search, Information, Think, Answer]);
    assert_eq!(ep.trajectory.final_answer(), Some("Cross-country skiing"));
    assert_eq!(ep.reward.format, 0.0);
    assert_eq!(ep.reward.total, 1.0);
}

#[test]
fn router_that_never_answers_stops_at_turn_bound() {
    let (world, q) = easy_world();
    let registry = world.registry().clone();
    let router = ScriptedRouter { outputs: vec!["<think>still considering the question</think>".into()] };
    let reward = RewardConfig::default();
    let ep = run_episode(&router, &registry, &world, &q, &[1.0], 4, stage1(&reward), &mut rng_for(1, &["ep"])).unwrap();
    assert_eq!(ep.em, 0.0);
    assert_eq!(ep.trajectory.count(Think), 4);
    assert!(ep.actions.is_empty());
    assert!(ep.reward.fired_rules.contains(&FormatRule::MissingSearch));
}

#[test]
fn malformed_search_is_penalized_and_episode_continues() {
    let (world, q) = easy_world();
    let registry = world.registry().clone();
    let bad = "<think>a</think><graphrag>HippoRAG2</graphrag><think>b</think><llm>Qwen2.5-7B-Instruct</llm><search>sport Qwen2.5-7B-Instruct HippoRAG2</search>";
    let good = "<think>a</think><graphrag>HippoRAG2</graphrag><think>b</think><llm>Qwen2.5-7B-Instruct</llm><search>sport:Qwen2.5-7B-Instruct;HippoRAG2</search>";
    let answer = "<think>c</think><answer>Cross-country skiing</answer>";
    let router = ScriptedRouter { outputs: vec![bad.into(), good.into(), answer.into()] };
    let reward = RewardConfig::default();
    let ep = run_episode(&router, &registry, &world, &q, &[1.0], 4, stage1(&reward), &mut rng_for(1, &["ep"])).unwrap();
    assert_eq!(ep.search_turns, 2);
    assert_eq!(ep.actions.len(), 1);
    assert!(ep.reward.fired_rules.contains(&FormatRule::InvalidSearchFormat));
    assert!(ep.transcript.contains("Search not executed"));
    assert_eq!(ep.em, 1.0);
}

#[test]
fn unknown_generator_surfaces_as_information_and_episode_continues() {
    let (world, q) = easy_world();
    let registry = world.registry().clone();
    let router = ForcedRouter::parse("HippoRAG2:GPT-X,HippoRAG2:Qwen2.5-7B-Instruct").unwrap();
    let reward = RewardConfig::default();
    let ep = run_episode(&router, &registry, &world, &q, &[1.0], 4, stage1(&reward), &mut rng_for(1, &["ep"])).unwrap();
    assert!(ep.transcript.contains("backend error: unknown llm 'GPT-X'"));
    assert_eq!(ep.actions.len(), 1);
    assert_eq!(ep.em, 1.0);
}

/// Each question is solved by exactly one of the 25 pairs. Odds are scripted
/// per tier, so the solving generator is the only one of its tier.
fn one_of_25_world(n: usize) -> (SimWorld, Vec<QuestionRecord>) {
    let registry = BackendRegistry::standard();
    let gs = registry.graphrag_ids();
    let unique_tiers = [Tier::Medium, Tier::Large];
    let mut questions = BTreeMap::new();
    let mut ds = Vec::new();
    for i in 0..n {
        let g = &gs[i % 5];
        let tier = unique_tiers[(i / 5) % 2];
        questions.insert(format!("u{i}"), entry(&format!("entity {i}"), vec![(g, tier, 1.0)]));
        ds.push(QuestionRecord::new(&format!("u{i}"), &format!("question {i}"), &[&format!("entity {i}")]));
    }
    (SimWorld::new(WorldScript { failure_mode: FailureMode::Distractor, questions }, registry).unwrap(), ds)
}

#[test]
fn uniform_router_hit_rate_matches_closed_form() {
    let registry = BackendRegistry::standard();
    let (world, ds) = one_of_25_world(3_000);
    for q in ds.iter().take(10) {
        let e = &world.script().questions[&q.id];
        let solving = registry
            .graphrags
            .iter()
            .flat_map(|g| registry.llms.iter().map(move |l| (g, l)))
            .filter(|(g, l)| e.pair_odds(&g.id, l.tier) > 0.0)
            .count();
        assert_eq!(solving, 1);
    }
    let feats = featurize_all(&ds);
    let report = evaluate(&UniformRouter, &ds, &feats, &registry, &world, &EvalConfig { seed: 4, ..Default::default() }).unwrap();

    // Three searches fit in four turns; the last turn answers.
    let expected = 1.0 - (24.0f64 / 25.0).powi(3);
    let n = ds.len() as f64;
    let sigma = (expected * (1.0 - expected) / n).sqrt();
    assert!((report.em() - expected).abs() < 3.0 * sigma, "em {} vs expected {expected} (sigma {sigma})", report.em());
}

#[test]
fn oracle_router_reaches_ceiling_on_solvable_set() {
    let registry = BackendRegistry::standard();
    let (world, ds) = one_of_25_world(100);
    let feats = featurize_all(&ds);
    let report = evaluate(&OracleRouter { world: &world }, &ds, &feats, &registry, &world, &EvalConfig::default()).unwrap();
    assert_eq!(report.em(), 1.0);
    assert_eq!(report.overall.avg_valid_calls, 1.0);
}

#[test]
fn empty_dataset_reports_zero_counts_and_undefined_shares() {
    let registry = BackendRegistry::standard();
    let (world, _) = one_of_25_world(1);
    let report = evaluate(&UniformRouter, &[], &[], &registry, &world, &EvalConfig::default()).unwrap();
    assert_eq!(report.overall.count, 0);
    assert!(report.overall.routing_share.is_none());
    let records = report.records();
    assert!(records.iter().filter(|r| r.metric.starts_with("routing_share")).all(|r| r.value.is_none()));
    assert!(report.to_jsonl().contains(r#""value":null"#));
}

#[test]
fn evaluation_is_deterministic_across_exec_modes() {
    let registry = BackendRegistry::standard();
    let (world, ds) = one_of_25_world(200);
    let feats = featurize_all(&ds);
    let par = EvalConfig { seed: 7, exec: ExecMode::Parallel, ..Default::default() };
    let seq = EvalConfig { seed: 7, exec: ExecMode::Sequential, ..Default::default() };
    let a = run_all(&UniformRouter, &ds, &feats, &registry, &world, &par).unwrap();
    let b = run_all(&UniformRouter, &ds, &feats, &registry, &world, &seq).unwrap();
    let c = run_all(&UniformRouter, &ds, &feats, &registry, &world, &par).unwrap();
    let text = |eps: &[tierroute_core::harness::Episode]| eps.iter().map(|e| e.transcript.clone()).collect::<Vec<_>>();
    assert_eq!(text(&a), text(&b));
    assert_eq!(text(&a), text(&c));
}
