mod common;

use std::collections::BTreeSet;

use common::{fixture, judy_workspace, read};
use hypodb::causal::{causal_order, complete_structure, derive_sigma, FunctionalDependency};
use hypodb::closure::close_sigma;
use hypodb::num::NumTable;
use hypodb::structure::{parse_mathml_file, parse_structure_file, Declarations};
use hypodb::synthesis::RowSet;
use hypodb::urel::{Cell, Condition};

fn fds(lines: &[&str]) -> BTreeSet<FunctionalDependency> {
    lines.iter().map(|l| l.parse().unwrap()).collect()
}

fn owned(set: BTreeSet<&FunctionalDependency>) -> BTreeSet<FunctionalDependency> {
    set.into_iter().cloned().collect()
}

#[test]
fn sigma_28_and_closure() {
    let m = parse_structure_file(&fixture("hill.model")).unwrap();
    let c = complete_structure(&m).unwrap();
    assert_eq!(c.equations().len(), 5);
    let sigma = derive_sigma(&c, &causal_order(&c).unwrap());
    assert_eq!(
        owned(sigma.as_set()),
        fds(&[
            "KO2 n pO2 υ -> SHbO2",
            "n p50 υ -> KO2",
            "φ -> n",
            "φ -> p50"
        ])
    );
    let closed = close_sigma(&sigma, &c).unwrap();
    assert_eq!(
        owned(closed.as_set()),
        fds(&["n p50 φ υ -> KO2", "n p50 pO2 φ υ -> SHbO2"])
    );
}

#[test]
fn mathml_and_structure_file_agree() {
    let decl = Declarations::parse(&read("hill.decl")).unwrap();
    let from_xml = parse_mathml_file(&fixture("hill.mml"))
        .unwrap()
        .with_declarations(&decl)
        .unwrap();
    let from_text = parse_structure_file(&fixture("hill.model")).unwrap();
    assert_eq!(from_xml.variables(), from_text.variables());
    assert_eq!(from_xml.roles(), from_text.roles());
    let sig = |m| {
        let c = complete_structure(m).unwrap();
        derive_sigma(&c, &causal_order(&c).unwrap())
    };
    assert_eq!(sig(&from_xml).as_set(), sig(&from_text).as_set());
}

#[test]
fn hill_trial_matches_big_table() {
    let t = NumTable::read_csv(std::fs::File::open(fixture("hill_trial.csv")).unwrap()).unwrap();
    assert_eq!(t.len(), 1001);
    let row = |i: usize| t.rows[i].iter().map(|n| n.text()).collect::<Vec<_>>();
    assert_eq!(row(0), ["0", "1.51207022127057E-4", "0", "2.7", "26"]);
    assert_eq!(row(1)[2], "3.01697581987324E-7");
    assert_eq!(row(2)[2], "1.96043341970514E-6");
    assert_eq!(
        row(1000)[..3],
        ["100", "1.51207022127057E-4", "9.74346796798538E-1"]
    );
    // the STUDY table's Hill prediction at pO2 = 1
    assert_eq!(row(10)[2], "1.51184162020125E-4");
}

#[test]
fn synthesized_relations_match_u_relation_figure() {
    let dir = tempfile::tempdir().unwrap();
    let mut ws = judy_workspace(&dir.path().join("w"));
    let db = ws.synthesize(1).unwrap();

    let y0 = db.relation("Y0").unwrap();
    let rows: Vec<_> = y0
        .rows
        .iter()
        .map(|r| (r.conditions[0], r.data.clone()))
        .collect();
    assert_eq!(
        rows,
        [28, 31, 32]
            .iter()
            .enumerate()
            .map(|(k, u)| (
                Condition::new(0, k as u32 + 1),
                vec![Cell::Id(1), Cell::Id(*u)]
            ))
            .collect::<Vec<_>>()
    );
    for alt in 1..=3 {
        assert!((db.world.marginal(0, alt).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    let y1 = db.relation("Y28_1").unwrap();
    assert_eq!(y1.rows.len(), 1);
    assert_eq!(y1.rows[0].conditions, [Condition::new(1, 1)]);
    assert_eq!(y1.rows[0].data[1].to_string(), "2.7");
    assert_eq!(db.world.marginal(1, 1), Some(1.0));
    let y2 = db.relation("Y28_2").unwrap();
    assert_eq!(y2.rows.len(), 1);
    assert_eq!(y2.rows[0].data[1].to_string(), "26");
    assert_eq!(db.world.marginal(2, 1), Some(1.0));

    let y3 = db.relation("Y28_3").unwrap();
    assert_eq!(y3.rows.len(), 1);
    assert_eq!(y3.rows[0].data[2].to_string(), "1.51207022127057E-4");

    let y4 = db.relation("Y28_4").unwrap();
    assert_eq!(y4.rows.len(), 1001);
    let theta = [
        Condition::new(0, 1),
        Condition::new(1, 1),
        Condition::new(2, 1),
    ];
    for r in &y4.rows {
        assert_eq!(r.conditions, theta);
        assert!((y4.conf(&db.world, &r.data) - 1.0 / 3.0).abs() < 1e-12);
    }
    assert_eq!(y4.rows[1].data[3].to_string(), "3.01697581987324E-7");
    assert_eq!(y4.rows[1000].data[3].to_string(), "9.74346796798538E-1");
    db.check().unwrap();
}

#[test]
fn decomposition_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let mut ws = judy_workspace(&dir.path().join("w"));
    ws.synthesize(1).unwrap();
    for u in [28, 31, 32] {
        let vars = ws.hypothesis(u).unwrap().variables();
        let trial = ws.trial_table(1, u, 1).unwrap();
        let ingested = RowSet::from_trials(1, u, &vars, [&trial]).unwrap();
        let rebuilt = ws.db(1).unwrap().reconstruct_big_table(u, &vars).unwrap();
        assert_eq!(rebuilt.rows.len(), 1001);
        assert_eq!(rebuilt, ingested, "hypothesis {u}");
    }
}
