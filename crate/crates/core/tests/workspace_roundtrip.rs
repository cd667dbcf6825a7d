mod common;

use common::{judy_workspace, read, spec};
use hypodb::inference::{parse_filter, rank, Sigma, StudyQuery};
use hypodb::workspace::{OpenMode, Workspace};
use hypodb::Error;

#[test]
fn reload_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("w");
    let mut ws = judy_workspace(&root);
    ws.synthesize(1).unwrap();
    let mut q = StudyQuery::new(1, 1);
    q.sigma = Sigma::Fixed(0.05);
    let study = ws.condition(&q, false).unwrap();

    let catalog = ws.catalog().clone();
    let db = ws.db(1).unwrap().clone();
    let trial = ws.trial_table(1, 28, 1).unwrap();
    drop(ws);

    let ws = Workspace::open(&root, OpenMode::ReadOnly).unwrap();
    assert_eq!(ws.catalog(), &catalog);
    assert_eq!(ws.db(1).unwrap(), &db);
    assert_eq!(ws.trial_table(1, 28, 1).unwrap(), trial);
    let reloaded = ws.study(study.study_id).unwrap();
    assert_eq!(reloaded, study.result);
    for (a, b) in reloaded.rows.iter().zip(&study.result.rows) {
        assert_eq!(a.posterior.to_bits(), b.posterior.to_bits());
        assert_eq!(a.log_likelihood.to_bits(), b.log_likelihood.to_bits());
    }
}

#[test]
fn trial_files_keep_original_text() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("w");
    judy_workspace(&root);
    let stored = std::fs::read_to_string(root.join("trials/1_28_1.csv")).unwrap();
    assert_eq!(
        stored.replace("\r\n", "\n"),
        read("hill_trial.csv").replace("\r\n", "\n")
    );
}

#[test]
fn conditioning_updates_the_prior() {
    let dir = tempfile::tempdir().unwrap();
    let mut ws = judy_workspace(&dir.path().join("w"));
    let mut q = StudyQuery::new(1, 1);
    q.sigma = Sigma::Fixed(0.05);
    assert!(matches!(
        ws.condition(&q, false).unwrap_err(),
        Error::Stale(1)
    ));

    let first = ws.condition(&q, true).unwrap().result;
    assert_eq!(first.n, 11);
    assert_eq!(first.rows.len(), 3);
    for r in &first.rows {
        assert!((r.prior - 1.0 / 3.0).abs() < 1e-15);
    }
    let sum: f64 = first.rows.iter().map(|r| r.posterior).sum();
    assert!((sum - 1.0).abs() < 1e-9);

    // explanation marginals now equal the posteriors
    let db = ws.db(1).unwrap();
    for (k, r) in first.rows.iter().enumerate() {
        assert!((db.world.marginal(0, k as u32 + 1).unwrap() - r.posterior).abs() < 1e-15);
    }

    let second = ws.condition(&q, false).unwrap().result;
    for (a, b) in first.rows.iter().zip(&second.rows) {
        assert!((b.prior - a.posterior).abs() < 1e-12);
    }
    assert_eq!(second.prior_version, first.prior_version + 1);
}

#[test]
fn update_prior_false_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let mut ws = judy_workspace(&dir.path().join("w"));
    let mut q = StudyQuery::new(1, 1);
    q.update_prior = false;
    let a = ws.condition(&q, true).unwrap();
    let b = ws.condition(&q, false).unwrap();
    assert_ne!(a.study_id, b.study_id);
    assert_eq!(a.result, b.result);
    assert_eq!(
        ws.ranking(b.study_id, Some(2)).unwrap(),
        rank(&b.result, Some(2))
    );
}

#[test]
fn filters_and_partial_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let mut ws = judy_workspace(&dir.path().join("w"));
    let mut q = StudyQuery::new(1, 1);
    q.filter = parse_filter("pO2:20:50").unwrap();
    q.update_prior = false;
    let s = ws.condition(&q, true).unwrap().result;
    assert_eq!(s.n, 4);

    // an observation beyond the simulated range excludes every candidate
    let (meta, _) = ws
        .load_observations(1, b"pO2,SHbO2\n150,0.99\n", &["pO2".into()], "out of range")
        .unwrap();
    let q = StudyQuery::new(1, meta.obs_id);
    assert!(matches!(
        ws.condition(&q, false).unwrap_err(),
        Error::NoAlignableCandidates
    ));

    // off-grid observations align with a tolerance
    let (meta, _) = ws
        .load_observations(1, b"pO2,SHbO2\n10.04,0.07\n", &["pO2".into()], "off grid")
        .unwrap();
    let mut q = StudyQuery::new(1, meta.obs_id);
    q.sigma = Sigma::Fixed(0.1);
    assert!(matches!(
        ws.condition(&q, false).unwrap_err(),
        Error::NoAlignableCandidates
    ));
    q.epsilon = 0.05;
    q.update_prior = false;
    assert_eq!(ws.condition(&q, false).unwrap().result.rows.len(), 3);
}

#[test]
fn second_trial_adds_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let mut ws = judy_workspace(&dir.path().join("w"));
    let shifted = read("hill_trial.csv").replace(",2.7,26", ",2.7,27");
    // KO2 and SHbO2 are left as-is; the trial is only checked for consistency
    ws.load_trial(1, 28, shifted.as_bytes()).unwrap();
    let db = ws.synthesize(1).unwrap();
    assert_eq!(db.world.distribution(2).unwrap(), [0.5, 0.5]);
    let mut q = StudyQuery::new(1, 1);
    q.update_prior = false;
    let s = ws.condition(&q, false).unwrap().result;
    let ids: Vec<_> = s.rows.iter().map(|r| (r.upsilon, r.tid)).collect();
    assert_eq!(ids, [(28, 1), (28, 2), (31, 1), (32, 1)]);
    // priors: x0 uniform over three hypotheses, p50 split in two
    assert!((s.rows[0].prior - 1.0 / 6.0 / (1.0 / 6.0 * 2.0 + 2.0 / 3.0)).abs() < 1e-15);
}

#[test]
fn mathml_registration() {
    let dir = tempfile::tempdir().unwrap();
    let mut ws = Workspace::init(dir.path().join("w")).unwrap();
    let mut s = spec("hill.mml", "HbO.Hill", 28);
    s.format = hypodb::catalog::StructureFormat::Mathml;
    s.declarations = Some(read("hill.decl"));
    let h = ws.register_hypothesis(&s).unwrap();
    assert_eq!(h.sigma_prime.to_text().lines().count(), 2);
}
