use trajaudit_core::audit::{audit_model, dataset_verdict, AuditConfig, Verdict};
use trajaudit_core::critic::{train_critic, CriticConfig};
use trajaudit_core::data::normalize_actions;
use trajaudit_core::env::{benchmark_controllers, generate_dataset, LinearControlEnv};
use trajaudit_core::policy::{train_bc, train_shadows, PolicyNetConfig};

#[test]
fn held_out_model_is_member_and_foreign_model_is_not() {
    let env = LinearControlEnv::default();
    let ctrl = benchmark_controllers();
    let target = normalize_actions(&generate_dataset("a", &env, &ctrl[0], 40, 1).unwrap())
        .unwrap()
        .0;
    let other = normalize_actions(&generate_dataset("b", &env, &ctrl[4], 40, 2).unwrap())
        .unwrap()
        .0;
    let pcfg = PolicyNetConfig::default();
    let shadows = train_shadows(&target, 16, &pcfg, 100).unwrap();
    let (shadows, held_out) = shadows.split_at(15);
    let foreign = train_bc(&other, &pcfg, 7).unwrap();
    let critic = train_critic(&target, &CriticConfig::default()).unwrap().critic;
    let cfg = AuditConfig {
        audited: 30,
        ..Default::default()
    };

    let pos = audit_model(&target, shadows, &critic, &held_out[0], &cfg).unwrap();
    assert_eq!(pos.members + pos.non_members + pos.skipped, 30);
    assert!(pos.member_fraction >= 0.9, "held-out {}", pos.member_fraction);
    assert!(dataset_verdict(&pos, 0.5).unwrap());

    let neg = audit_model(&target, shadows, &critic, &foreign, &cfg).unwrap();
    assert!(neg.member_fraction <= 0.1, "foreign {}", neg.member_fraction);
    assert!(!dataset_verdict(&neg, 0.5).unwrap());
    assert!(neg.verdicts.iter().all(|v| v.verdict != Verdict::Skipped));

    // Same inputs, same report.
    assert_eq!(audit_model(&target, shadows, &critic, &held_out[0], &cfg).unwrap(), pos);
}
