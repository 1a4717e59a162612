use atd_core::layering::SignalKind;
use atd_core::synth::{generate, InjectionSpec, SynthConfig};
use atd_core::trace::{parse_ctef, ParseError, Payload};
use proptest::prelude::*;

#[test]
fn synth_traces_round_trip_event_wise() {
    for seed in 0..100 {
        let cfg = SynthConfig {
            seed,
            n_plans: 1 + (seed % 3) as usize,
            injections: vec![InjectionSpec {
                kind: SignalKind::OperationCompletionFailure,
                count: 1,
            }],
            ..Default::default()
        };
        let trace = generate(&cfg).unwrap().trace;
        let text = trace.to_ctef();
        let parsed = parse_ctef(text.as_bytes()).unwrap();
        assert_eq!(parsed.events, trace.events, "seed {seed}");
        assert_eq!(parsed.to_ctef(), text);
    }
}

#[test]
fn malformed_line_is_reported_by_number() {
    let trace = generate(&SynthConfig::default()).unwrap().trace;
    let mut lines: Vec<String> = trace.to_ctef().lines().map(str::to_string).collect();
    lines[4] = "{not json".into();
    let err = parse_ctef(lines.join("\n").as_bytes()).unwrap_err();
    assert_eq!(err.line(), Some(5));
    assert!(matches!(err, ParseError::MalformedRecord { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Arbitrary text in every free-form field survives serialization.
    #[test]
    fn free_text_round_trips(seed in 0u64..1000, query in ".*", content in ".*") {
        let mut trace = generate(&SynthConfig { seed, query: query.clone(), ..Default::default() })
            .unwrap()
            .trace;
        for e in &mut trace.events {
            if let Payload::OperationResult { content: c, links, .. } = &mut e.payload {
                *c = content.clone();
                links.clear();
            }
        }
        let parsed = parse_ctef(trace.to_ctef().as_bytes()).unwrap();
        prop_assert_eq!(parsed.events, trace.events);
    }
}
