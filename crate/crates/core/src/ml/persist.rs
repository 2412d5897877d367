//! Versioned JSON model files.
//!
//! ```text
//! {"format_version": 1, "model_type": "forest", "threshold": 0.5, "payload": {...}}
//! ```
//!
//! Trees nest as `{"feature", "threshold", "left", "right"}` or `{"leaf"}`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{BoostingModel, Classifier, ForestModel, SvmModel, TreeModel};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile<T> {
    pub format_version: u32,
    pub model_type: String,
    pub threshold: f64,
    pub payload: T,
    /// Settings that produced the model, for reproducibility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
    model_type: String,
}

/// Unlimited nesting: unbounded forest trees can be deeper than serde_json's
/// default limit.
pub(crate) fn from_str_unbounded<T: DeserializeOwned>(s: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(s);
    de.disable_recursion_limit();
    let value = T::deserialize(&mut de)?;
    de.end()?;
    Ok(value)
}

impl<T: Serialize> ModelFile<T> {
    pub fn new(model_type: impl Into<String>, threshold: f64, payload: T) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            model_type: model_type.into(),
            threshold,
            payload,
            config: None,
        }
    }

    pub fn with_config(mut self, config: Option<serde_json::Value>) -> Self {
        self.config = config;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

impl<T: DeserializeOwned> ModelFile<T> {
    /// Parses a model file, checking the version first and then that the
    /// model type is one of `expected`.
    pub fn from_json(text: &str, expected: &[&str]) -> Result<Self> {
        let header: Header = from_str_unbounded(text)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found: header.format_version,
                expected: FORMAT_VERSION,
            });
        }
        if !expected.is_empty() && !expected.contains(&header.model_type.as_str()) {
            return Err(Error::ModelType {
                found: header.model_type,
                expected: expected.join("|"),
            });
        }
        from_str_unbounded(text)
    }

    pub fn load(path: impl AsRef<Path>, expected: &[&str]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, expected)
    }
}

/// Reads only the `model_type` of a model file.
pub fn peek_model_type(text: &str) -> Result<String> {
    let header: Header = from_str_unbounded(text)?;
    Ok(header.model_type)
}

pub fn classifier_to_json(model: &Classifier, threshold: f64) -> Result<String> {
    let ty = model.model_type();
    match model {
        Classifier::Tree(m) => ModelFile::new(ty, threshold, m).to_json(),
        Classifier::Forest(m) => ModelFile::new(ty, threshold, m).to_json(),
        Classifier::Boosting(m) => ModelFile::new(ty, threshold, m).to_json(),
        Classifier::Svm(m) => ModelFile::new(ty, threshold, m).to_json(),
    }
}

pub fn classifier_from_json(text: &str) -> Result<(Classifier, f64)> {
    fn typed<T: DeserializeOwned>(text: &str, ty: &str) -> Result<(T, f64)> {
        let f: ModelFile<T> = ModelFile::from_json(text, &[ty])?;
        Ok((f.payload, f.threshold))
    }
    let header: Header = from_str_unbounded(text)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::ModelVersion {
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(match header.model_type.as_str() {
        "tree" => typed::<TreeModel>(text, "tree").map(|(m, t)| (Classifier::Tree(m), t))?,
        "forest" => typed::<ForestModel>(text, "forest").map(|(m, t)| (Classifier::Forest(m), t))?,
        "boosting" => {
            typed::<BoostingModel>(text, "boosting").map(|(m, t)| (Classifier::Boosting(m), t))?
        }
        "svm" => typed::<SvmModel>(text, "svm").map(|(m, t)| (Classifier::Svm(m), t))?,
        other => {
            return Err(Error::ModelType {
                found: other.to_string(),
                expected: "tree|forest|boosting|svm".into(),
            })
        }
    })
}

pub fn save_classifier(model: &Classifier, threshold: f64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, classifier_to_json(model, threshold)?).map_err(|e| Error::io(path, e))
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<(Classifier, f64)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    classifier_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ml::{train, Dataset, ModelKind, TrainConfig, TreeNode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y = x.iter().map(|r| r[0] + 0.5 * r[2] > 0.1).collect();
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn roundtrip_predicts_identically() {
        let d = data();
        let cfg = TrainConfig {
            n_trees: 20,
            boosting_rounds: 20,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let probes: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        for kind in ModelKind::ALL {
            let m = train(kind, &d, &cfg).unwrap();
            let text = classifier_to_json(&m, 0.4).unwrap();
            let (back, thr) = classifier_from_json(&text).unwrap();
            assert_eq!(thr, 0.4);
            assert_eq!(back, m);
            for p in &probes {
                assert_eq!(m.predict_score(p).unwrap(), back.predict_score(p).unwrap());
            }
        }
    }

    #[test]
    fn corrupted_file_is_parse_error() {
        let d = data();
        let m = train(ModelKind::Svm, &d, &TrainConfig::default()).unwrap();
        let text = classifier_to_json(&m, 0.5).unwrap();
        let broken = &text[..text.len() / 2];
        assert!(matches!(classifier_from_json(broken), Err(Error::Json(_))));
    }

    #[test]
    fn old_version_rejected() {
        let text = r#"{"format_version":0,"model_type":"tree","threshold":0.5,"payload":{"n_features":1,"root":{"leaf":1.0}}}"#;
        assert!(matches!(
            classifier_from_json(text),
            Err(Error::ModelVersion { found: 0, expected: 1 })
        ));
    }

    #[test]
    fn wrong_type_rejected() {
        let text = r#"{"format_version":1,"model_type":"knn","threshold":0.5,"payload":{}}"#;
        assert!(matches!(classifier_from_json(text), Err(Error::ModelType { .. })));
    }

    #[test]
    fn tree_schema_shape() {
        let m = Classifier::Tree(TreeModel {
            n_features: 1,
            root: TreeNode::Split {
                feature: 0,
                threshold: 0.5,
                left: Box::new(TreeNode::Leaf { leaf: 0.0 }),
                right: Box::new(TreeNode::Leaf { leaf: 1.0 }),
            },
        });
        let text = classifier_to_json(&m, 0.5).unwrap();
        assert_eq!(
            text.trim_end(),
            r#"{"format_version":1,"model_type":"tree","threshold":0.5,"payload":{"n_features":1,"root":{"feature":0,"threshold":0.5,"left":{"leaf":0.0},"right":{"leaf":1.0}}}}"#
        );
    }

    #[test]
    fn deep_tree_loads() {
        let mut node = TreeNode::Leaf { leaf: 1.0 };
        for i in 0..400 {
            node = TreeNode::Split {
                feature: 0,
                threshold: i as f64,
                left: Box::new(TreeNode::Leaf { leaf: 0.0 }),
                right: Box::new(node),
            };
        }
        let m = Classifier::Tree(TreeModel {
            n_features: 1,
            root: node,
        });
        let text = classifier_to_json(&m, 0.5).unwrap();
        let (back, _) = classifier_from_json(&text).unwrap();
        assert_eq!(back, m);
    }
}
