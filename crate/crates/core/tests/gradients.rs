use tmf_core::check::{run_checks, run_suite, CheckOptions, Mutation, Scope, Suite};

fn passes(suite: Suite) {
    let r = run_suite(suite, 5, Mutation::None).unwrap();
    println!("{r}");
    assert_eq!(r.cases, 50);
    assert!(r.passed(), "{r}");
}

#[test]
fn ctc_logit_gradient() {
    passes(Suite::CtcGrad);
}

#[test]
fn ecl_feature_gradient() {
    passes(Suite::EclGrad);
}

#[test]
fn center_loss_gradient() {
    passes(Suite::CenterGrad);
}

#[test]
fn tmf_gradient_through_the_network() {
    passes(Suite::TmfNetworkGrad);
}

#[test]
fn fmf_gradient_through_the_network() {
    passes(Suite::FmfNetworkGrad);
}

#[test]
fn flipped_ecl_sign_is_caught() {
    let r = run_suite(Suite::EclGrad, 5, Mutation::FlipEclSign).unwrap();
    assert!(!r.passed(), "{r}");
    assert!(r.max_error > 0.5);
    let all = run_checks(&CheckOptions {
        scope: Scope::All,
        seed: 5,
        mutation: Mutation::FlipEclSign,
    })
    .unwrap();
    let failed: Vec<Suite> = all.iter().filter(|r| !r.passed()).map(|r| r.suite).collect();
    assert_eq!(failed, vec![Suite::EclGrad]);
}

#[test]
fn ctc_scope_runs_no_loss_suites() {
    let reports = run_checks(&CheckOptions {
        scope: Scope::Ctc,
        ..CheckOptions::default()
    })
    .unwrap();
    assert_eq!(reports.len(), 4);
    assert!(reports.iter().all(|r| r.suite.scope() == Scope::Ctc && r.passed()));
}
