//! Python bindings: corpora, training, the two-stage pipeline and metrics.
//!
//! Structured results (tokens, reports, pair records) come back as plain
//! Python dicts and lists.

use std::path::PathBuf;

use abbrev_core::candgen::{generate_candidates as gen_candidates, CandidateRuleConfig};
use abbrev_core::corpus::{self, split_corpus};
use abbrev_core::detect::{self, DetectorConfig, DetectorModel};
use abbrev_core::evalx::{self, Confusion};
use abbrev_core::identify::{self as pipeline, AbbrevSource, MatcherConfig, MatcherModel};
use abbrev_core::matchfeat::HashNgramEmbedder;
use abbrev_core::ml::{ModelKind, TrainConfig};
use abbrev_core::synth::{synthesize as synth, SynthConfig};
use abbrev_core::textprep::{self, TokenizerConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: abbrev_core::Error) -> PyErr {
    match e {
        abbrev_core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn kind(name: &str) -> PyResult<ModelKind> {
    name.parse().map_err(|e: abbrev_core::Error| err(e))
}

fn train_config(seed: u64, n_trees: Option<usize>) -> TrainConfig {
    let mut t = TrainConfig {
        seed,
        ..Default::default()
    };
    if let Some(n) = n_trees {
        t.n_trees = n;
    }
    t
}

fn source(name: &str) -> PyResult<AbbrevSource> {
    match name {
        "detected" => Ok(AbbrevSource::Detected),
        "gold" => Ok(AbbrevSource::Gold),
        other => Err(PyValueError::new_err(format!("source must be 'detected' or 'gold', got {other:?}"))),
    }
}

/// Word list used for the `in_dictionary` detection feature.
#[pyclass(module = "abbrevpy", frozen)]
pub struct Dictionary {
    inner: textprep::Dictionary,
}

#[pymethods]
impl Dictionary {
    #[new]
    fn new(words: Vec<String>) -> Self {
        Dictionary {
            inner: textprep::Dictionary::from_words(words),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Dictionary {
            inner: textprep::load_dictionary(path).map_err(err)?,
        })
    }

    fn __contains__(&self, word: &str) -> bool {
        self.inner.contains(word)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn words(&self) -> Vec<String> {
        self.inner.iter().map(str::to_string).collect()
    }
}

/// Annotated documents in the JSON Lines corpus format.
#[pyclass(module = "abbrevpy", frozen)]
pub struct Corpus {
    inner: corpus::Corpus,
}

#[pymethods]
impl Corpus {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Corpus {
            inner: corpus::load_corpus(path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        Ok(Corpus {
            inner: corpus::read_corpus(text.as_bytes()).map_err(err)?,
        })
    }

    fn to_jsonl(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        corpus::write_corpus(&self.inner, &mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        corpus::save_corpus(&self.inner, path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn token_count(&self) -> usize {
        self.inner.token_count()
    }

    #[getter]
    fn doc_ids(&self) -> Vec<String> {
        self.inner.documents.iter().map(|d| d.doc_id.clone()).collect()
    }

    /// The document at `index` as a dict.
    fn document(&self, py: Python<'_>, index: usize) -> PyResult<Py<PyAny>> {
        let doc = self
            .inner
            .documents
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("no document {index}")))?;
        to_py(py, doc)
    }

    fn stats(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &corpus::corpus_stats(&self.inner))
    }

    /// Document-level split into `(train, test)`.
    #[pyo3(signature = (ratio = 0.8, seed = 0))]
    fn split(&self, ratio: f64, seed: u64) -> PyResult<(Corpus, Corpus)> {
        let (a, b) = split_corpus(&self.inner, ratio, seed).map_err(err)?;
        Ok((Corpus { inner: a }, Corpus { inner: b }))
    }

    /// Candidate definition spans `(start, end)` for the token at `abbrev_index`.
    #[pyo3(signature = (doc_index, abbrev_index, coverage_min = None, max_missing = None))]
    fn candidates(
        &self,
        doc_index: usize,
        abbrev_index: usize,
        coverage_min: Option<f64>,
        max_missing: Option<usize>,
    ) -> PyResult<Vec<(usize, usize)>> {
        let doc = self
            .inner
            .documents
            .get(doc_index)
            .ok_or_else(|| PyValueError::new_err(format!("no document {doc_index}")))?;
        let mut rules = CandidateRuleConfig::default();
        if let Some(c) = coverage_min {
            rules.char_coverage_min = c;
        }
        if let Some(m) = max_missing {
            rules.max_missing_chars = m;
        }
        rules.validate().map_err(err)?;
        Ok(gen_candidates(doc, abbrev_index, &rules).iter().map(|c| c.span()).collect())
    }
}

/// Ensemble of token classifiers; a token is flagged if any member flags it.
#[pyclass(module = "abbrevpy", frozen)]
pub struct Detector {
    inner: DetectorModel,
}

#[pymethods]
impl Detector {
    #[staticmethod]
    #[pyo3(signature = (corpus, dictionary, members = None, seed = 0, n_trees = None))]
    fn train(
        py: Python<'_>,
        corpus: &Corpus,
        dictionary: &Dictionary,
        members: Option<Vec<String>>,
        seed: u64,
        n_trees: Option<usize>,
    ) -> PyResult<Self> {
        let members = match members {
            Some(m) => m.iter().map(|s| kind(s)).collect::<PyResult<Vec<_>>>()?,
            None => ModelKind::ALL.to_vec(),
        };
        let cfg = DetectorConfig {
            members,
            train: train_config(seed, n_trees),
            ..Default::default()
        };
        let inner = py
            .detach(|| detect::train_detector(&corpus.inner, &dictionary.inner, &TokenizerConfig::default(), &cfg))
            .map_err(err)?;
        Ok(Detector { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Detector {
            inner: DetectorModel::load(path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Detector {
            inner: DetectorModel::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn members(&self) -> Vec<String> {
        self.inner.kinds().iter().map(|k| k.to_string()).collect()
    }

    /// Sorted token indices flagged in each document.
    fn detect(&self, corpus: &Corpus, dictionary: &Dictionary) -> PyResult<Vec<Vec<usize>>> {
        corpus
            .inner
            .documents
            .iter()
            .map(|d| Ok(detect::detect(&self.inner, d, &dictionary.inner).map_err(err)?.into_iter().collect()))
            .collect()
    }

    /// Per-member and ensemble metrics against the gold token labels.
    fn evaluate(&self, py: Python<'_>, corpus: &Corpus, dictionary: &Dictionary) -> PyResult<Py<PyAny>> {
        let report = evalx::evaluate_detection(&self.inner, &corpus.inner, &dictionary.inner).map_err(err)?;
        to_py(py, &report)
    }

    fn importances(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &evalx::detection_importances(&self.inner).map_err(err)?)
    }
}

/// Classifier over (abbreviation, candidate definition) pairs.
#[pyclass(module = "abbrevpy", frozen)]
pub struct Matcher {
    inner: MatcherModel,
}

#[pymethods]
impl Matcher {
    /// Trains on candidate pairs of the gold abbreviations.
    #[staticmethod]
    #[pyo3(signature = (corpus, model = "forest", seed = 0, n_trees = None))]
    fn train(py: Python<'_>, corpus: &Corpus, model: &str, seed: u64, n_trees: Option<usize>) -> PyResult<Self> {
        let cfg = MatcherConfig {
            model: kind(model)?,
            train: train_config(seed, n_trees),
            ..Default::default()
        };
        let inner = py
            .detach(|| {
                let pairs = pipeline::build_pair_dataset(
                    &corpus.inner,
                    &CandidateRuleConfig::default(),
                    &HashNgramEmbedder::default(),
                )?;
                pipeline::train_matcher(&pairs, &cfg)
            })
            .map_err(err)?;
        Ok(Matcher { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Matcher {
            inner: MatcherModel::load(path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Matcher {
            inner: MatcherModel::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    /// Pair-level metrics; `source` is "gold" or "detected".
    #[pyo3(signature = (corpus, dictionary, detector = None, source = "gold"))]
    fn evaluate(
        &self,
        py: Python<'_>,
        corpus: &Corpus,
        dictionary: &Dictionary,
        detector: Option<&Detector>,
        source: &str,
    ) -> PyResult<Py<PyAny>> {
        let results = run_pipeline(corpus, dictionary, detector, self, source)?;
        to_py(py, &evalx::evaluate_identification(&results, &self.inner).map_err(err)?)
    }

    fn importances(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &evalx::identification_importances(&self.inner).map_err(err)?)
    }
}

fn run_pipeline(
    corpus: &Corpus,
    dictionary: &Dictionary,
    detector: Option<&Detector>,
    matcher: &Matcher,
    source_name: &str,
) -> PyResult<Vec<pipeline::DocumentResult>> {
    pipeline::identify_corpus(
        &corpus.inner,
        detector.map(|d| &d.inner),
        &matcher.inner,
        &CandidateRuleConfig::default(),
        &HashNgramEmbedder::default(),
        &dictionary.inner,
        source(source_name)?,
    )
    .map_err(err)
}

/// Accepted pairs for every document as a list of dicts.
#[pyfunction]
#[pyo3(signature = (corpus, dictionary, detector, matcher, source = "detected"))]
fn identify(
    py: Python<'_>,
    corpus: &Corpus,
    dictionary: &Dictionary,
    detector: Option<&Detector>,
    matcher: &Matcher,
    source: &str,
) -> PyResult<Py<PyAny>> {
    let results = run_pipeline(corpus, dictionary, detector, matcher, source)?;
    let records: Vec<_> = corpus
        .inner
        .documents
        .iter()
        .zip(&results)
        .flat_map(|(d, r)| pipeline::pair_records(d, r))
        .collect();
    to_py(py, &records)
}

/// Tokens of raw text as dicts with `text`, `paren_depth` and `sent_id`.
#[pyfunction]
#[pyo3(signature = (text, stopwords = true))]
fn tokenize(py: Python<'_>, text: &str, stopwords: bool) -> PyResult<Py<PyAny>> {
    let cfg = if stopwords {
        TokenizerConfig::default()
    } else {
        TokenizerConfig::without_stopwords()
    };
    to_py(py, &textprep::tokenize(text, &cfg))
}

/// Synthetic corpus with planted abbreviations; returns `(corpus, dictionary)`.
#[pyfunction]
#[pyo3(signature = (seed = 0, tokens = 5000, documents = 40, preset = "low-noise"))]
fn synthesize(seed: u64, tokens: usize, documents: usize, preset: &str) -> PyResult<(Corpus, Dictionary)> {
    let base = SynthConfig {
        seed,
        target_tokens: tokens,
        documents,
        ..Default::default()
    };
    let cfg = match preset {
        "default" => base,
        "low-noise" => base.low_noise(),
        "noiseless" => base.noiseless(),
        other => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
    };
    let out = synth(&cfg).map_err(err)?;
    Ok((Corpus { inner: out.corpus }, Dictionary { inner: out.dictionary }))
}

#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    evalx::roc_auc(&scores, &labels).map_err(err)
}

#[pyfunction]
#[pyo3(name = "f1")]
fn f1_score(tp: usize, fp: usize, fn_: usize, tn: usize) -> f64 {
    evalx::f1(&Confusion { tp, fp, fn_, tn })
}

#[pyfunction]
fn accuracy(tp: usize, fp: usize, fn_: usize, tn: usize) -> f64 {
    evalx::accuracy(&Confusion { tp, fp, fn_, tn })
}

#[pymodule]
fn abbrevpy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dictionary>()?;
    m.add_class::<Corpus>()?;
    m.add_class::<Detector>()?;
    m.add_class::<Matcher>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(identify, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    Ok(())
}
