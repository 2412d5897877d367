use std::path::PathBuf;

use abbrev_core::evalx::roc_auc;
use abbrev_core::ml::{train, Dataset, ModelKind, TrainConfig};

fn load(name: &str) -> Dataset {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn separable_fixture_fits_every_model() {
    let data = load("separable.json");
    for kind in ModelKind::ALL {
        let m = train(kind, &data, &TrainConfig::default()).unwrap();
        let correct = data
            .x
            .iter()
            .zip(&data.y)
            .filter(|(x, &y)| m.predict_label(x, 0.5).unwrap() == y)
            .count();
        let acc = correct as f64 / data.len() as f64;
        assert!(acc >= 0.99, "{kind}: {acc}");
    }
}

#[test]
fn xor_fixture_fits_trees() {
    let data = load("xor.json");
    for kind in [ModelKind::Forest, ModelKind::Boosting] {
        let m = train(kind, &data, &TrainConfig::default()).unwrap();
        let scores: Vec<f64> = data.x.iter().map(|x| m.predict_score(x).unwrap()).collect();
        let auc = roc_auc(&scores, &data.y).unwrap();
        assert!(auc >= 0.95, "{kind}: {auc}");
    }
}
