use std::fs;
use std::path::PathBuf;

use logicfit::lang::{parse_model, parse_priors, parse_props, parse_space, Symbols};
use logicfit::model::Model;
use logicfit::smc::read_target;

fn read(rel: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../experiments").join(rel);
    fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn rumour_files_parse() {
    let m = parse_model(&read("rumour/rumour.model")).unwrap();
    assert!(matches!(m, Model::Ctmc(_)));
    assert_eq!(m.state_names(), ["I", "S", "R"]);
    assert_eq!(m.parameters(), ["ks", "kr"]);
    let props = parse_props(&read("rumour/rumour.props"), &Symbols::of(&m)).unwrap();
    assert_eq!(props.len(), 4);
    assert_eq!(props[0].formula.to_string(), "G[0, 200] (S < 45)");
    assert_eq!(props[3].formula.to_string(), "G[90, 200] (82 < R & R < 88)");
    let space = parse_space(&read("rumour/rumour.space")).unwrap();
    assert_eq!(space.names(), ["ks", "kr"]);
    let priors = parse_priors(&read("rumour/rumour.priors")).unwrap();
    assert_eq!(priors.len(), 2);
    assert_eq!(priors[1].mean, 0.8);
}

#[test]
fn toggle_files_parse() {
    let m = parse_model(&read("toggle/toggle.model")).unwrap();
    assert!(matches!(m, Model::Hybrid(_)));
    assert_eq!(m.state_names(), ["X1", "X2", "G1", "G2"]);
    let props = parse_props(&read("toggle/toggle.props"), &Symbols::of(&m)).unwrap();
    assert_eq!(props.iter().map(|p| p.formula.depth()).collect::<Vec<_>>(), [2000.0, 2000.0]);
    let space = parse_space(&read("toggle/toggle.space")).unwrap();
    assert_eq!(space.dim(), 3);
    assert!(m.check_bindings(&space.bindings(&[2.0, 0.1, 0.1])).is_ok());
    let t = read_target(read("toggle/toggle.target").as_bytes(), 2, 1e-6).unwrap();
    assert_eq!(t.probs(), &[0.0, 0.5, 0.5, 0.0]);
}

#[test]
fn poisson_files_parse() {
    let m = parse_model(&read("poisson/poisson.model")).unwrap();
    let props = parse_props(&read("poisson/poisson.props"), &Symbols::of(&m)).unwrap();
    assert_eq!(props[0].name, "above3");
    assert_eq!(parse_space(&read("poisson/poisson.space")).unwrap().dim(), 1);
}
