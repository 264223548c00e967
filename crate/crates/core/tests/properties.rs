mod common;

use common::*;
use proptest::prelude::*;
use tamp_core::harness::{load_spatial_cases, run_spatial_eval, SpatialEvalConfig};
use tamp_core::react_protocol::parse_transcript;

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(t in transcript()) {
        let text = t.to_log();
        let back = parse_transcript(&text).unwrap();
        prop_assert_eq!(&back.question, &t.question);
        prop_assert_eq!(&back.steps, &t.steps);
        prop_assert_eq!(&back.final_turn, &t.final_turn);
        prop_assert_eq!(back.to_log(), text);
    }

    #[test]
    fn geometric_placements_pass_their_goal(case in closure_case(), spec in specifier()) {
        if let Err(e) = check_closure(&case, spec) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn tool_sequences_keep_the_scene_valid(seq in sequence()) {
        if let Err(e) = check_sequence(&seq) {
            prop_assert!(false, "{}", e);
        }
    }
}

#[test]
fn variance_grows_with_noise() {
    let cases = load_spatial_cases(&data("spatial/manifest.toml")).unwrap();
    let reports: Vec<_> = [0.0, 0.005, 0.02]
        .into_iter()
        .map(|sigma| {
            let config = SpatialEvalConfig {
                trials: 20,
                sigma,
                seed: 7,
                ..Default::default()
            };
            run_spatial_eval(&cases, &config).unwrap()
        })
        .collect();
    for (i, row) in reports[0].rows.iter().enumerate() {
        let v: Vec<f64> = reports.iter().map(|r| r.rows[i].avg_variance.unwrap()).collect();
        assert_eq!(v[0], 0.0, "{}", row.location);
        assert!(v[0] <= v[1] && v[1] <= v[2] && v[2] > 0.0, "{}: {v:?}", row.location);
    }
}
