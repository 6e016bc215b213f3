mod support;

use std::collections::{BTreeMap, BTreeSet};

use support::format_oracle::{fuzz_trajectory, oracle_penalty_tenths, oracle_rules};
use tierroute_core::backends::BackendRegistry;
use tierroute_core::protocol::parse_trajectory;
use tierroute_core::reward::format_reward;
use tierroute_core::seed::rng_for;

fn engine_rules(text: &str, registry: &BackendRegistry) -> (f64, BTreeMap<String, u32>) {
    let score = format_reward(&parse_trajectory(text), registry);
    let fired = score
        .fired
        .iter()
        .map(|h| (serde_json::to_value(h.rule).unwrap().as_str().unwrap().to_string(), h.tenths))
        .collect();
    (score.penalty, fired)
}

#[test]
fn fuzzed_trajectories_match_brute_force_checker() {
    let registry = BackendRegistry::standard();
    let graphrags = registry.graphrag_ids();
    let llms = registry.llm_ids();
    let g: Vec<&str> = graphrags.iter().map(String::as_str).collect();
    let l: Vec<&str> = llms.iter().map(String::as_str).collect();
    let mut rng = rng_for(2024, &["format-fuzz"]);
    let mut seen = BTreeSet::new();
    let mut clean = 0;
    for case in 0..10_000 {
        let text = fuzz_trajectory(&mut rng, &g, &l);
        let expected = oracle_rules(&text, &g, &l);
        let (penalty, fired) = engine_rules(&text, &registry);
        let expected_owned: BTreeMap<String, u32> = expected.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        assert_eq!(fired, expected_owned, "case {case}: {text}");
        assert_eq!(penalty, f64::from(oracle_penalty_tenths(&expected)) / 10.0, "case {case}: {text}");
        seen.extend(expected.keys().copied());
        clean += usize::from(expected.is_empty());
    }
    // The fuzzer reaches every rule.
    assert_eq!(seen.len(), 12, "rules reached: {seen:?}");
    assert!(clean > 100, "only {clean} clean trajectories");
}
