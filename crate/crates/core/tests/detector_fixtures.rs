//! Hand-labeled positive/negative snippets per detector. Expectations live in
//! `data/detector_fixtures.json` and were written independently of the
//! detector code.

use kmreview::analyzer::{
    detect_error_handling, detect_mutable_default, detect_naming, detect_resource_leak, detect_unreachable, parse,
    Finding, SyntaxTree,
};
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixture {
    name: String,
    rule: String,
    source: String,
    lines: Vec<usize>,
}

fn fixtures() -> Vec<Fixture> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/detector_fixtures.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn detector(rule: &str) -> fn(&SyntaxTree) -> Vec<Finding> {
    match rule {
        "KM-01" => detect_naming,
        "KM-02" => detect_unreachable,
        "KM-03" => detect_error_handling,
        "KM-04" => detect_resource_leak,
        "KM-05" => detect_mutable_default,
        other => panic!("unknown rule {other}"),
    }
}

#[test]
fn every_fixture_fires_exactly_as_labeled() {
    let fixtures = fixtures();
    assert!(fixtures.len() >= 30);
    let mut failures = Vec::new();
    for fx in &fixtures {
        let tree = parse(&fx.source).unwrap();
        let found: Vec<Finding> = detector(&fx.rule)(&tree);
        assert!(found.iter().all(|f| f.rule_id == fx.rule));
        let mut lines: Vec<usize> = found.iter().map(|f| f.line).collect();
        lines.sort_unstable();
        if lines != fx.lines {
            failures.push(format!(
                "{} ({}): expected {:?}, got {:?}",
                fx.name, fx.rule, fx.lines, lines
            ));
        }
    }
    assert!(failures.is_empty(), "fixture mismatches:\n{}", failures.join("\n"));
}

#[test]
fn corpus_has_three_positives_and_negatives_per_detector() {
    let fixtures = fixtures();
    for rule in ["KM-01", "KM-02", "KM-03", "KM-04", "KM-05"] {
        let pos = fixtures
            .iter()
            .filter(|f| f.rule == rule && !f.lines.is_empty())
            .count();
        let neg = fixtures.iter().filter(|f| f.rule == rule && f.lines.is_empty()).count();
        assert!(pos >= 3 && neg >= 3, "{rule}: {pos} positive, {neg} negative");
    }
}

#[test]
fn fixtures_parse_without_opaque_regions() {
    for fx in fixtures() {
        assert!(!parse(&fx.source).unwrap().has_opaque(), "{}", fx.name);
    }
}
