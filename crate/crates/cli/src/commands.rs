use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use abbrev_core::candgen::generate_candidates;
use abbrev_core::corpus::{
    corpus_stats, load_corpus, manifest_path, save_corpus, save_manifest, split_corpus, split_tokens,
    write_corpus, Corpus, Document, TokenRef,
};
use abbrev_core::detect::{
    detection_dataset_for, train_detector, train_detector_on, DetectorConfig, DetectorModel,
    DETECTOR_MODEL_TYPE,
};
use abbrev_core::evalx::{
    detection_importances, evaluate_detection, evaluate_detection_refs, evaluate_identification,
    identification_importances, roc_auc, ImportanceReport, MetricsReport,
};
use abbrev_core::identify::{
    build_pair_dataset, identify_corpus, pair_records, train_matcher, AbbrevSource, MatcherConfig,
    MatcherModel, MATCHER_MODEL_TYPE,
};
use abbrev_core::matchfeat::{EmbeddingProvider, EmbeddingTable, HashNgramEmbedder};
use abbrev_core::ml::persist::peek_model_type;
use abbrev_core::ml::{ModelKind, TrainConfig};
use abbrev_core::synth::{synthesize, SynthConfig};
use abbrev_core::textprep::{load_dictionary, load_word_list, tokenize, Dictionary, TokenizerConfig};
use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::{RunConfig, SplitUnit};
use crate::{Cli, Command, Format, Preset, Stage};

/// Invalid flag combination; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.overrides.resolve()?;
    let mut out = Output::open(cli.output.as_deref())?;
    match &cli.command {
        Command::Tokenize { inputs } => cmd_tokenize(&cfg, inputs, &mut out),
        Command::TrainDetector => cmd_train_detector(&cfg, cli.format, &mut out),
        Command::Detect { text, all } => cmd_detect(&cfg, text.as_deref(), *all, &mut out),
        Command::GenCandidates { text } => cmd_gen_candidates(&cfg, text.as_deref(), &mut out),
        Command::TrainMatcher => cmd_train_matcher(&cfg, cli.format, &mut out),
        Command::Identify { text } => cmd_identify(&cfg, text.as_deref(), &mut out),
        Command::Evaluate { full, importances } => {
            cmd_evaluate(&cfg, *full, *importances, cli.format, &mut out)
        }
        Command::Sweep {
            param,
            range,
            stage,
            model,
        } => cmd_sweep(&cfg, param, range, *stage, *model, cli.format, &mut out),
        Command::Synth {
            out: path,
            preset,
            tokens,
            docs,
            ratio,
            jitter,
            decoys,
            missing,
            reverse,
        } => {
            let mut s = match preset {
                None => cfg.synth.clone(),
                Some(Preset::Default) => SynthConfig::default(),
                Some(Preset::LowNoise) => SynthConfig::default().low_noise(),
                Some(Preset::Noiseless) => SynthConfig::default().noiseless(),
            };
            s.seed = cfg.seed;
            macro_rules! set {
                ($flag:ident, $field:ident) => {
                    if let Some(v) = $flag {
                        s.$field = *v;
                    }
                };
            }
            set!(tokens, target_tokens);
            set!(docs, documents);
            set!(ratio, abbrev_ratio);
            set!(jitter, distance_jitter);
            set!(decoys, decoy_rate);
            set!(missing, missing_definition_rate);
            set!(reverse, reverse_rate);
            cmd_synth(&s, path.as_deref(), &mut out)
        }
        Command::Stats => {
            let corpus = require_corpus(&cfg)?;
            let stats = corpus_stats(&corpus);
            match cli.format {
                Format::Json => out.json_line(&stats)?,
                Format::Table => {
                    for (k, v) in serde_json::to_value(&stats)?.as_object().unwrap() {
                        writeln!(out, "{k:<20} {v}")?;
                    }
                }
            }
            Ok(())
        }
        Command::ShowConfig => {
            write!(out, "{}", cfg.to_toml()?)?;
            Ok(())
        }
    }?;
    out.finish()
}

/// Stdout or a file, buffered.
pub struct Output {
    inner: BufWriter<Box<dyn Write>>,
}

impl Output {
    fn open(path: Option<&Path>) -> Result<Self> {
        let sink: Box<dyn Write> = match path {
            Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
            None => Box::new(std::io::stdout()),
        };
        Ok(Output {
            inner: BufWriter::new(sink),
        })
    }

    fn json_line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.inner, value)?;
        self.inner.write_all(b"\n")?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

impl Write for Output {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.inner.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn echo_config(cfg: &RunConfig) {
    eprintln!("# config: {}", cfg.to_json());
}

fn require_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let path = cfg.corpus.as_ref().ok_or_else(|| usage("--corpus is required"))?;
    Ok(load_corpus(path)?)
}

fn dictionary(cfg: &RunConfig) -> Result<Dictionary> {
    match &cfg.dict {
        Some(p) => Ok(load_dictionary(p)?),
        None => {
            log::warn!("no --dict given, every token counts as out of dictionary");
            Ok(Dictionary::default())
        }
    }
}

fn tokenizer(cfg: &RunConfig) -> Result<TokenizerConfig> {
    let mut t = TokenizerConfig::default();
    if let Some(p) = &cfg.stopwords {
        t = t.with_stopwords(load_word_list(p)?);
    }
    Ok(t)
}

fn provider(cfg: &RunConfig) -> Result<Box<dyn EmbeddingProvider>> {
    Ok(match &cfg.embeddings {
        Some(p) => Box::new(EmbeddingTable::load(p)?),
        None => Box::new(HashNgramEmbedder::default()),
    })
}

/// Corpus from `--text` (tokenized into one document) or `--corpus`.
fn input_corpus(cfg: &RunConfig, text: Option<&Path>) -> Result<Corpus> {
    match (text, &cfg.corpus) {
        (Some(_), Some(_)) => Err(usage("--text and --corpus are mutually exclusive")),
        (Some(p), None) => {
            let raw = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let id = p.file_stem().map_or("text".into(), |s| s.to_string_lossy().into_owned());
            Ok(Corpus::new(vec![Document::new(id, tokenize(&raw, &tokenizer(cfg)?))])?)
        }
        (None, _) => require_corpus(cfg),
    }
}

#[derive(Default)]
struct Models {
    detector: Option<DetectorModel>,
    matcher: Option<MatcherModel>,
}

fn load_models(cfg: &RunConfig) -> Result<Models> {
    let mut m = Models::default();
    for path in &cfg.model_in {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let ty = peek_model_type(&text).with_context(|| format!("reading {}", path.display()))?;
        match ty.as_str() {
            DETECTOR_MODEL_TYPE => m.detector = Some(DetectorModel::from_json(&text)?),
            MATCHER_MODEL_TYPE => m.matcher = Some(MatcherModel::from_json(&text)?),
            other => return Err(usage(format!("{}: unsupported model type {other:?}", path.display()))),
        }
    }
    Ok(m)
}

fn detector_config(cfg: &RunConfig) -> DetectorConfig {
    DetectorConfig {
        members: cfg.members.clone(),
        train: cfg.train.clone(),
        class_weighting: cfg.class_weighting,
        threshold: cfg.threshold,
    }
}

fn matcher_config(cfg: &RunConfig) -> MatcherConfig {
    MatcherConfig {
        model: cfg.matcher,
        train: cfg.train.clone(),
        class_weighting: cfg.class_weighting,
        threshold: cfg.threshold,
    }
}

fn write_report(
    out: &mut Output,
    format: Format,
    cfg: &RunConfig,
    reports: &[&MetricsReport],
    importances: &[ImportanceReport],
) -> Result<()> {
    match format {
        Format::Json => {
            let doc = json!({
                "config": cfg.to_json(),
                "reports": reports,
                "importances": importances,
            });
            serde_json::to_writer_pretty(&mut *out, &doc)?;
            writeln!(out)?;
        }
        Format::Table => {
            writeln!(out, "# config: {}", cfg.to_json())?;
            for r in reports {
                write!(out, "{}", r.to_table())?;
            }
            for r in importances {
                write!(out, "{}", r.to_table())?;
            }
        }
    }
    Ok(())
}

fn require_model_out(cfg: &RunConfig) -> Result<&Path> {
    cfg.model_out.as_deref().ok_or_else(|| usage("--model-out is required"))
}

fn cmd_tokenize(cfg: &RunConfig, inputs: &[std::path::PathBuf], out: &mut Output) -> Result<()> {
    echo_config(cfg);
    let tok = tokenizer(cfg)?;
    let mut docs = Vec::new();
    for p in inputs {
        let raw = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let id = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
        docs.push(Document::new(id, tokenize(&raw, &tok)));
    }
    write_corpus(&Corpus::new(docs)?, &mut *out)?;
    Ok(())
}

/// Train and test views for detection, by document or by token.
enum DetectionSplit {
    Documents(Corpus, Corpus),
    Tokens(Vec<TokenRef>, Vec<TokenRef>),
}

fn detection_split(cfg: &RunConfig, corpus: &Corpus) -> Result<DetectionSplit> {
    Ok(match cfg.split_unit {
        SplitUnit::Document => {
            let (a, b) = split_corpus(corpus, cfg.split_ratio, cfg.seed)?;
            DetectionSplit::Documents(a, b)
        }
        SplitUnit::Token => {
            let (a, b) = split_tokens(corpus, cfg.split_ratio, cfg.seed)?;
            DetectionSplit::Tokens(a, b)
        }
    })
}

fn fit_detector(cfg: &RunConfig, corpus: &Corpus, dict: &Dictionary) -> Result<(DetectorModel, MetricsReport)> {
    let tok = tokenizer(cfg)?;
    let dcfg = detector_config(cfg);
    Ok(match detection_split(cfg, corpus)? {
        DetectionSplit::Documents(train, test) => {
            let model = train_detector(&train, dict, &tok, &dcfg)?;
            let report = evaluate_detection(&model, &test, dict)?;
            (model, report)
        }
        DetectionSplit::Tokens(train, test) => {
            let data = detection_dataset_for(corpus, &train, dict, &tok);
            let model = train_detector_on(data, &tok, &dcfg)?;
            let report = evaluate_detection_refs(&model, corpus, &test, dict)?;
            (model, report)
        }
    })
}

fn cmd_train_detector(cfg: &RunConfig, format: Format, out: &mut Output) -> Result<()> {
    let model_out = require_model_out(cfg)?;
    let corpus = require_corpus(cfg)?;
    let dict = dictionary(cfg)?;
    let (model, report) = fit_detector(cfg, &corpus, &dict)?;
    std::fs::write(model_out, model.to_json_with_config(Some(cfg.to_json()))?)
        .with_context(|| format!("writing {}", model_out.display()))?;
    write_report(out, format, cfg, &[&report], &[])
}

fn cmd_detect(cfg: &RunConfig, text: Option<&Path>, all: bool, out: &mut Output) -> Result<()> {
    let models = load_models(cfg)?;
    let detector = models.detector.ok_or_else(|| usage("detect needs a detector --model-in"))?;
    let corpus = input_corpus(cfg, text)?;
    let dict = dictionary(cfg)?;
    echo_config(cfg);
    for doc in &corpus.documents {
        for d in detector.decide_document(doc, &dict)? {
            if !all && !d.positive {
                continue;
            }
            let members: serde_json::Map<String, serde_json::Value> = detector
                .kinds()
                .iter()
                .zip(&d.member_scores)
                .map(|(k, s)| (k.as_str().to_string(), json!(s)))
                .collect();
            out.json_line(&json!({
                "doc_id": doc.doc_id,
                "index": d.index,
                "text": doc.tokens[d.index].text,
                "score": d.score,
                "positive": d.positive,
                "members": members,
            }))?;
        }
    }
    Ok(())
}

fn cmd_gen_candidates(cfg: &RunConfig, text: Option<&Path>, out: &mut Output) -> Result<()> {
    let models = load_models(cfg)?;
    let corpus = input_corpus(cfg, text)?;
    let dict = dictionary(cfg)?;
    if text.is_some() && models.detector.is_none() {
        return Err(usage("--text has no gold labels; give a detector --model-in"));
    }
    echo_config(cfg);
    for doc in &corpus.documents {
        let abbrevs: Vec<usize> = match &models.detector {
            Some(det) => abbrev_core::detect::detect(det, doc, &dict)?.into_iter().collect(),
            None => doc.gold_abbrev_indices(),
        };
        for a in abbrevs {
            for c in generate_candidates(doc, a, &cfg.rules) {
                out.json_line(&json!({
                    "doc_id": doc.doc_id,
                    "abbrev_index": c.abbrev_index,
                    "start": c.start,
                    "end": c.end,
                }))?;
            }
        }
    }
    Ok(())
}

fn fit_matcher(
    cfg: &RunConfig,
    train: &Corpus,
    provider: &dyn EmbeddingProvider,
) -> Result<(MatcherModel, f64)> {
    let pairs = build_pair_dataset(train, &cfg.rules, provider)?;
    log::info!(
        "{} training pairs, {} positive, generation recall {:.4}",
        pairs.examples.len(),
        pairs.positives(),
        pairs.generation_recall()
    );
    Ok((train_matcher(&pairs, &matcher_config(cfg))?, pairs.generation_recall()))
}

fn cmd_train_matcher(cfg: &RunConfig, format: Format, out: &mut Output) -> Result<()> {
    let model_out = require_model_out(cfg)?;
    let corpus = require_corpus(cfg)?;
    let dict = dictionary(cfg)?;
    let provider = provider(cfg)?;
    let (train, test) = split_corpus(&corpus, cfg.split_ratio, cfg.seed)?;
    let (matcher, train_recall) = fit_matcher(cfg, &train, provider.as_ref())?;
    std::fs::write(model_out, matcher.to_json_with_config(Some(cfg.to_json()))?)
        .with_context(|| format!("writing {}", model_out.display()))?;
    let results = identify_corpus(
        &test,
        None,
        &matcher,
        &cfg.rules,
        provider.as_ref(),
        &dict,
        AbbrevSource::Gold,
    )?;
    let mut report = evaluate_identification(&results, &matcher)?;
    report.extra.insert("train_generation_recall".into(), train_recall);
    write_report(out, format, cfg, &[&report], &[])
}

fn cmd_identify(cfg: &RunConfig, text: Option<&Path>, out: &mut Output) -> Result<()> {
    let models = load_models(cfg)?;
    let (Some(detector), Some(matcher)) = (models.detector, models.matcher) else {
        return Err(usage("identify needs a detector and a matcher --model-in"));
    };
    let corpus = input_corpus(cfg, text)?;
    let dict = dictionary(cfg)?;
    let provider = provider(cfg)?;
    echo_config(cfg);
    let results = identify_corpus(
        &corpus,
        Some(&detector),
        &matcher,
        &cfg.rules,
        provider.as_ref(),
        &dict,
        AbbrevSource::Detected,
    )?;
    for (doc, r) in corpus.documents.iter().zip(&results) {
        for rec in pair_records(doc, r) {
            out.json_line(&rec)?;
        }
    }
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, full: bool, want_importances: bool, format: Format, out: &mut Output) -> Result<()> {
    let corpus = require_corpus(cfg)?;
    let dict = dictionary(cfg)?;
    let provider = provider(cfg)?;
    let models = load_models(cfg)?;
    if full && (models.detector.is_none() || models.matcher.is_none()) {
        return Err(usage("--full evaluates given models; pass a detector and a matcher --model-in"));
    }
    let (train, test) = if full {
        (None, corpus.clone())
    } else {
        let (a, b) = split_corpus(&corpus, cfg.split_ratio, cfg.seed)?;
        (Some(a), b)
    };
    let detector = match models.detector {
        Some(d) => d,
        None => {
            let tok = tokenizer(cfg)?;
            train_detector(train.as_ref().unwrap(), &dict, &tok, &detector_config(cfg))?
        }
    };
    let matcher = match models.matcher {
        Some(m) => m,
        None => fit_matcher(cfg, train.as_ref().unwrap(), provider.as_ref())?.0,
    };
    let detection = evaluate_detection(&detector, &test, &dict)?;
    let results = identify_corpus(
        &test,
        Some(&detector),
        &matcher,
        &cfg.rules,
        provider.as_ref(),
        &dict,
        cfg.eval_on.into(),
    )?;
    let identification = evaluate_identification(&results, &matcher)?;
    let mut importances = Vec::new();
    if want_importances {
        match detection_importances(&detector) {
            Ok(r) => importances.push(r),
            Err(e) => log::warn!("detection importances: {e}"),
        }
        match identification_importances(&matcher) {
            Ok(r) => importances.push(r),
            Err(e) => log::warn!("identification importances: {e}"),
        }
    }
    write_report(out, format, cfg, &[&detection, &identification], &importances)
}

/// Values from `a..b`, `a..b:step` or `v1,v2,...`.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let bad = || usage(format!("cannot parse range {s:?}"));
    if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((h, st)) => (h, st.parse::<f64>().map_err(|_| bad())?),
            None => (rest, 1.0),
        };
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        if !(step > 0.0) || hi < lo {
            return Err(bad());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| lo + i as f64 * step).collect())
    } else {
        s.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect()
    }
}

fn set_param(train: &mut TrainConfig, name: &str, v: f64) -> Result<()> {
    let as_count = || -> Result<usize> {
        if v < 0.0 || v.fract() != 0.0 {
            Err(usage(format!("{name} needs a non-negative integer, got {v}")))
        } else {
            Ok(v as usize)
        }
    };
    match name {
        "n_trees" => train.n_trees = as_count()?,
        "min_samples_split" => train.min_samples_split = as_count()?,
        "min_samples_leaf" => train.min_samples_leaf = as_count()?,
        "max_depth" | "forest_max_depth" => train.forest_max_depth = Some(as_count()?),
        "boosting_rounds" => train.boosting_rounds = as_count()?,
        "boosting_max_depth" => train.boosting_max_depth = as_count()?,
        "svm_epochs" => train.svm_epochs = as_count()?,
        "learning_rate" => train.learning_rate = v,
        "svm_regularization" => train.svm_regularization = v,
        other => return Err(usage(format!("unknown sweep parameter {other:?}"))),
    }
    train.validate()?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    value: f64,
    roc_auc: Option<f64>,
}

fn cmd_sweep(
    cfg: &RunConfig,
    param: &str,
    range: &str,
    stage: Stage,
    model: ModelKind,
    format: Format,
    out: &mut Output,
) -> Result<()> {
    let values = parse_range(range)?;
    let corpus = require_corpus(cfg)?;
    let dict = dictionary(cfg)?;
    let provider = provider(cfg)?;
    let (train, test) = split_corpus(&corpus, cfg.split_ratio, cfg.seed)?;
    if stage == Stage::Identification && model == ModelKind::Svm {
        return Err(usage("identification sweeps take forest or boosting"));
    }
    let tok = tokenizer(cfg)?;
    let mut rows = Vec::new();
    for v in values {
        let mut run = cfg.clone();
        set_param(&mut run.train, param, v)?;
        let auc = match stage {
            Stage::Detection => {
                let det = train_detector(
                    &train,
                    &dict,
                    &tok,
                    &DetectorConfig {
                        members: vec![model],
                        ..detector_config(&run)
                    },
                )?;
                evaluate_detection(&det, &test, &dict)?.rows[0].roc_auc
            }
            Stage::Identification => {
                run.matcher = model;
                let (m, _) = fit_matcher(&run, &train, provider.as_ref())?;
                let results = identify_corpus(
                    &test,
                    None,
                    &m,
                    &run.rules,
                    provider.as_ref(),
                    &dict,
                    AbbrevSource::Gold,
                )?;
                let scores: Vec<f64> = results.iter().flat_map(|r| r.pairs.iter().map(|p| p.score)).collect();
                let gold: Vec<bool> = results.iter().flat_map(|r| r.pairs.iter().map(|p| p.gold)).collect();
                roc_auc(&scores, &gold).ok()
            }
        };
        rows.push(SweepRow { value: v, roc_auc: auc });
    }
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(
                &mut *out,
                &json!({"config": cfg.to_json(), "param": param, "model": model, "rows": rows}),
            )?;
            writeln!(out)?;
        }
        Format::Table => {
            writeln!(out, "# config: {}", cfg.to_json())?;
            writeln!(out, "{:<14} {:>8}", param, "roc_auc")?;
            for r in &rows {
                let auc = r.roc_auc.map_or_else(|| "n/a".into(), |a| format!("{a:.4}"));
                writeln!(out, "{:<14} {:>8}", r.value, auc)?;
            }
        }
    }
    Ok(())
}

fn cmd_synth(s: &SynthConfig, path: Option<&Path>, out: &mut Output) -> Result<()> {
    eprintln!("# synth: {}", serde_json::to_string(s)?);
    let generated = synthesize(s)?;
    match path {
        None => write_corpus(&generated.corpus, &mut *out)?,
        Some(p) => {
            save_corpus(&generated.corpus, p)?;
            save_manifest(&generated.manifest, manifest_path(p))?;
            let dict_path = p.with_extension("dict.txt");
            let mut words = String::new();
            for w in generated.dictionary.iter() {
                words.push_str(w);
                words.push('\n');
            }
            std::fs::write(&dict_path, words).with_context(|| format!("writing {}", dict_path.display()))?;
            writeln!(out, "{}", serde_json::to_string(&generated.manifest)?)?;
        }
    }
    Ok(())
}
