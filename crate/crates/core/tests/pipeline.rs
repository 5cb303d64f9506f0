use modmark_core::generators::{generate, GenKind, GenSpec};
use modmark_core::instance::InstanceFile;
use modmark_core::verify::{self, InstanceInfo, SuiteConfig, VerifyConfig};
use modmark_core::{run_suite, verify_channel};

#[test]
fn file_round_trip_preserves_report() {
    let g = generate(&GenSpec::new(GenKind::Convex, vec![2, 2], 17)).unwrap();
    let text = InstanceFile::from_generated(&g).to_json();
    let ch = InstanceFile::from_json(&text).unwrap().to_channel().unwrap();
    let cfg = VerifyConfig::default();
    let a = verify_channel(&g.channel, InstanceInfo::for_channel("x", &g.channel), &cfg).unwrap();
    let b = verify_channel(&ch, InstanceInfo::for_channel("x", &ch), &cfg).unwrap();
    assert_eq!(a.residuals, b.residuals);
    assert!(a.passed);
}

#[test]
fn suite_is_deterministic() {
    let cfg = SuiteConfig {
        trials: 24,
        dims: vec![vec![2], vec![3, 1]],
        seed: 9,
        kinds: GenKind::ALL.to_vec(),
        verify: VerifyConfig::default(),
    };
    let a = serde_json::to_string(&run_suite(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&run_suite(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mixed_suite_separates_expected_failures() {
    let cfg = SuiteConfig {
        trials: 18,
        dims: vec![vec![2], vec![3]],
        seed: 1,
        kinds: GenKind::ALL.to_vec(),
        verify: VerifyConfig::default(),
    };
    let rep = run_suite(&cfg).unwrap();
    assert!(rep.ok(), "{:?}", rep.suite_summary.unexpected_failures);
    assert_eq!(rep.suite_summary.expected_failures.len(), 2);
    assert_eq!(rep.suite_summary.passed, 16);
}

#[test]
fn tensor_of_markov_maps_passes_every_check() {
    let a = generate(&GenSpec::new(GenKind::Schur, vec![2], 3)).unwrap().channel;
    let b = generate(&GenSpec::new(GenKind::Pinch, vec![2], 4)).unwrap().channel;
    let ab = a.tensor(&b).unwrap();
    assert_eq!(ab.source().algebra().block_dims(), &[4]);
    let rep = verify_channel(&ab, InstanceInfo::for_channel("ab", &ab), &VerifyConfig::default()).unwrap();
    assert!(rep.passed, "{:?}", rep.failed_checks());
}

#[test]
fn adjoint_reverses_composition() {
    let f = generate(&GenSpec::new(GenKind::Schur, vec![3], 5)).unwrap().channel;
    let g = generate(&GenSpec::new(GenKind::Automorphism, vec![3], 5))
        .unwrap()
        .channel;
    assert!(verify::adjoint_composition_residual(&f, &g).unwrap() <= 1e-10);
}
