// SPDX-License-Identifier: Apache-2.0

mod support;

use proptest::prelude::*;
use specloop_core::spec_model::{canonical_form, extract_spec_block, parse_spec_text};
use specloop_core::{detect_generator_stop, parse_spec, render_spec};
use support::strategies;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn render_then_parse_is_identity(spec in strategies::spec()) {
        let text = render_spec(&spec);
        let raw = extract_spec_block(&format!("Some analysis first.\n{text}\ntrailing words")).unwrap();
        prop_assert_eq!(parse_spec(&raw).unwrap(), spec.clone());
        prop_assert!(spec.validate().is_ok());
    }

    #[test]
    fn rendering_is_a_fixed_point(spec in strategies::spec()) {
        let once = render_spec(&spec);
        let twice = render_spec(&parse_spec(&extract_spec_block(&once).unwrap()).unwrap());
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn last_block_wins(a in strategies::spec(), b in strategies::spec()) {
        let out = format!("Draft:\n{}\nFinal answer:\n{}", render_spec(&a), render_spec(&b));
        prop_assert_eq!(parse_spec(&extract_spec_block(&out).unwrap()).unwrap(), b);
    }

    #[test]
    fn stop_detection_ignores_whitespace(spec in strategies::spec(), pad in "[ \t]{1,3}") {
        let text = render_spec(&spec).replace(' ', &format!(" {pad}"));
        let respaced = parse_spec_text(&extract_spec_block(&text).unwrap().into_string()).unwrap();
        prop_assert!(detect_generator_stop(&spec, &respaced));
        prop_assert_eq!(canonical_form(&spec), canonical_form(&respaced));
    }

    #[test]
    fn changed_description_is_not_a_stop(spec in strategies::spec()) {
        let mut other = spec.clone();
        other.functional_description.push_str(" The output is registered.");
        prop_assert!(!detect_generator_stop(&spec, &other));
    }
}

#[test]
fn missing_markers_are_reported() {
    assert!(extract_spec_block("Module Name: TopModule").is_err());
    assert!(extract_spec_block("[SPEC_START] never closed").is_err());
}
