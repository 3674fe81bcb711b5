use kmpn_core::train::{grad_check, GradCheckSpec, ModelKind};

fn run(kind: ModelKind) {
    let report = grad_check(kind, &GradCheckSpec::default(), 1e-4).unwrap();
    println!("{report}");
    assert!(report.passed(), "{report}");
}

#[test]
fn kmpn_gradients_match_finite_differences() {
    run(ModelKind::Kmpn);
}

#[test]
fn ckmpn_gradients_match_finite_differences() {
    run(ModelKind::Ckmpn);
}

#[test]
fn content_gradients_match_finite_differences() {
    run(ModelKind::Content);
}

#[test]
fn zero_tolerance_flags_every_tensor() {
    for kind in [ModelKind::Kmpn, ModelKind::Ckmpn, ModelKind::Content] {
        let report = grad_check(kind, &GradCheckSpec::default(), 0.0).unwrap();
        assert!(report.tensors.iter().all(|t| !t.passed));
        assert!(!report.passed());
    }
}

#[test]
fn other_seeds_pass() {
    for seed in [1, 2, 3] {
        let spec = GradCheckSpec {
            seed,
            ..GradCheckSpec::default()
        };
        for kind in [ModelKind::Kmpn, ModelKind::Ckmpn, ModelKind::Content] {
            let report = grad_check(kind, &spec, 1e-4).unwrap();
            assert!(report.passed(), "seed {seed}\n{report}");
        }
    }
}
