//! On-disk artifacts.
//!
//! Keyword models and fold logs are tab-separated text so they diff well;
//! trained models, splits and reports are JSON; score dumps and encoding
//! matrices are CSV for plotting tools. Floats are written in Rust's
//! shortest round-trip form, so every artifact reads back bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use kwvad_core::classifier::{ClassifierError, FoldReport, Mlp};
use kwvad_core::dataset::{Label, SplitAssignment};
use kwvad_core::deduction::Encoding;
use kwvad_core::induction::{DfBound, Provenance, Side, TfidfVariant};
use kwvad_core::metrics::{EvalReport, ScoredFrame};
use kwvad_core::text::StopList;
use kwvad_core::{KeywordModel, TrainedModel, VectorizerConfig};
use serde::{Deserialize, Serialize};

use crate::describer::DescriptionRecord;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} does not exist{hint}")]
    Missing { path: PathBuf, hint: String },
    #[error("{what} line {line}: {reason}")]
    Malformed { what: String, line: usize, reason: String },
    #[error("{what}: {reason}")]
    Invalid { what: String, reason: String },
}

fn malformed(what: &str, line: usize, reason: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        what: what.into(),
        line,
        reason: reason.into(),
    }
}

fn invalid(what: &str, reason: impl ToString) -> FormatError {
    FormatError::Invalid {
        what: what.into(),
        reason: reason.to_string(),
    }
}

/// Reads a file, turning "not found" into [`FormatError::Missing`] with a
/// hint on how to produce it.
pub fn read_text(path: &Path, hint: &str) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => FormatError::Missing {
            path: path.to_path_buf(),
            hint: if hint.is_empty() {
                String::new()
            } else {
                format!(" ({hint})")
            },
        },
        _ => FormatError::Io {
            path: path.to_path_buf(),
            source,
        },
    })
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), FormatError> {
    let io = |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Keyword model

const KEYWORDS_MAGIC: &str = "# kwvad keyword model v1";

fn parse_df(s: &str) -> Option<DfBound> {
    if s.contains(['.', 'e', 'E']) {
        s.parse().ok().map(DfBound::Fraction)
    } else {
        s.parse().ok().map(DfBound::Count)
    }
}

/// `# key: value` header lines followed by `term<TAB>weight`, one per line,
/// in model order.
pub fn render_keyword_model(model: &KeywordModel) -> String {
    let v = &model.vectorizer;
    let p = &model.provenance;
    let mut out = String::new();
    out.push_str(KEYWORDS_MAGIC);
    out.push('\n');
    let mut header = |k: &str, v: &dyn std::fmt::Display| writeln!(out, "# {k}: {v}").unwrap();
    header("dataset", &p.dataset);
    header("seed", &p.seed);
    header("model_id", &p.model_id);
    header("max_features", &v.max_features);
    header("min_df", &v.min_df);
    header("max_df", &v.max_df);
    header("ngram_n", &v.ngram_n);
    header("stop_words", &v.stop_words.id());
    header("stop_words_hash", &format_args!("{:016x}", v.stop_words.fingerprint()));
    header("tfidf_variant", &v.variant.id());
    header("log_base", &"e");
    header("keywords", &model.len());
    header("content_hash", &format_args!("{:016x}", model.content_hash()));
    for (t, w) in model.terms().iter().zip(model.weights()) {
        writeln!(out, "{t}\t{w}").unwrap();
    }
    out
}

pub fn parse_keyword_model(text: &str) -> Result<KeywordModel, FormatError> {
    const WHAT: &str = "keyword model";
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == KEYWORDS_MAGIC => {}
        _ => return Err(malformed(WHAT, 1, "missing keyword model header")),
    }
    let mut header = BTreeMap::new();
    let mut terms = Vec::new();
    let mut weights = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if let Some(h) = line.strip_prefix("# ") {
            let (k, v) = h
                .split_once(": ")
                .ok_or_else(|| malformed(WHAT, n, "header line is not `# key: value`"))?;
            header.insert(k.to_string(), v.to_string());
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (t, w) = line
            .split_once('\t')
            .ok_or_else(|| malformed(WHAT, n, "expected term<TAB>weight"))?;
        let w: f64 = w.parse().map_err(|_| malformed(WHAT, n, format!("bad weight {w:?}")))?;
        terms.push(t.to_string());
        weights.push(w);
    }
    let get = |k: &str| {
        header
            .get(k)
            .ok_or_else(|| invalid(WHAT, format!("missing header `{k}`")))
    };
    let num = |k: &str| -> Result<u64, FormatError> {
        get(k)?
            .parse()
            .map_err(|_| invalid(WHAT, format!("header `{k}` is not an integer")))
    };
    let df = |k: &str| -> Result<DfBound, FormatError> {
        parse_df(get(k)?).ok_or_else(|| invalid(WHAT, format!("header `{k}` is not a df bound")))
    };
    let stop_words = StopList::from_id(get("stop_words")?)
        .ok_or_else(|| invalid(WHAT, format!("unknown stop list {}", get("stop_words").unwrap())))?;
    let stop_hash = format!("{:016x}", stop_words.fingerprint());
    if get("stop_words_hash")? != &stop_hash {
        return Err(invalid(
            WHAT,
            format!(
                "stop list {} has hash {stop_hash}, file says {}",
                stop_words.id(),
                get("stop_words_hash")?
            ),
        ));
    }
    if get("log_base")? != "e" {
        return Err(invalid(WHAT, "only natural-log idf is supported"));
    }
    let variant = TfidfVariant::from_id(get("tfidf_variant")?).ok_or_else(|| invalid(WHAT, "unknown tfidf_variant"))?;
    let vectorizer = VectorizerConfig {
        max_features: num("max_features")? as usize,
        min_df: df("min_df")?,
        max_df: df("max_df")?,
        ngram_n: num("ngram_n")? as u32,
        stop_words,
        variant,
    };
    let provenance = Provenance {
        dataset: get("dataset")?.clone(),
        seed: num("seed")?,
        model_id: get("model_id")?.clone(),
    };
    if num("keywords")? as usize != terms.len() {
        return Err(invalid(
            WHAT,
            format!("header says {} keywords, found {}", num("keywords")?, terms.len()),
        ));
    }
    let model = KeywordModel::new(terms, weights, vectorizer, provenance).map_err(|e| invalid(WHAT, e))?;
    if let Some(h) = header.get("content_hash") {
        if *h != format!("{:016x}", model.content_hash()) {
            return Err(invalid(WHAT, "content hash does not match the keyword list"));
        }
    }
    Ok(model)
}

pub fn load_keyword_model(path: &Path) -> Result<KeywordModel, FormatError> {
    parse_keyword_model(&read_text(path, "run `kwvad induce` first")?)
}

/// Keywords ordered by |weight|, strongest first: `rank, term, weight, side`.
pub fn render_top_keywords(model: &KeywordModel) -> String {
    let mut order: Vec<usize> = (0..model.len()).collect();
    let w = model.weights();
    order.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));
    let mut out = String::from("rank\tterm\tweight\tside\n");
    for (rank, j) in order.into_iter().enumerate() {
        let side = match model.side(j) {
            Some(Side::Anomalous) => "anomalous",
            Some(Side::Normal) => "normal",
            None => "neutral",
        };
        writeln!(out, "{}\t{}\t{:.6}\t{side}", rank + 1, model.terms()[j], w[j]).unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Trained classifier

#[derive(Serialize, Deserialize)]
struct ModelEnvelope {
    format: String,
    version: u32,
    #[serde(with = "crate::describer::hex_u64")]
    keyword_model_hash: u64,
    model: TrainedModel,
}

const MODEL_FORMAT: &str = "kwvad-classifier";

pub fn render_trained_model(model: &TrainedModel) -> String {
    let env = ModelEnvelope {
        format: MODEL_FORMAT.into(),
        version: 1,
        keyword_model_hash: model.keyword_model_hash,
        model: model.clone(),
    };
    let mut s = serde_json::to_string_pretty(&env).expect("model serializes");
    s.push('\n');
    s
}

pub fn parse_trained_model(text: &str) -> Result<TrainedModel, FormatError> {
    const WHAT: &str = "trained model";
    let env: ModelEnvelope = serde_json::from_str(text).map_err(|e| invalid(WHAT, e))?;
    if env.format != MODEL_FORMAT || env.version != 1 {
        return Err(invalid(
            WHAT,
            format!("unsupported format {} v{}", env.format, env.version),
        ));
    }
    if env.keyword_model_hash != env.model.keyword_model_hash {
        return Err(invalid(WHAT, "envelope and model disagree on the keyword model hash"));
    }
    // Re-validate the layer shapes, which deserialization does not check.
    let params = Mlp::from_layers(env.model.params.layers().to_vec()).map_err(|e: ClassifierError| invalid(WHAT, e))?;
    if !params.is_finite() {
        return Err(invalid(WHAT, "non-finite parameters"));
    }
    Ok(env.model)
}

pub fn load_trained_model(path: &Path) -> Result<TrainedModel, FormatError> {
    parse_trained_model(&read_text(path, "run `kwvad train` first")?)
}

/// One row per fold and epoch.
pub fn render_fold_metrics(folds: &[FoldReport], chosen: usize) -> String {
    let mut out = String::from("fold\tepoch\ttrain_loss\tvalidation_loss\tbest\tchosen\n");
    for f in folds {
        for (e, (t, v)) in f.train_losses.iter().zip(&f.validation_losses).enumerate() {
            writeln!(
                out,
                "{}\t{}\t{t}\t{v}\t{}\t{}",
                f.fold,
                e + 1,
                u8::from(e == f.best_epoch),
                u8::from(f.fold == chosen)
            )
            .unwrap();
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Splits, reports, score dumps

pub fn render_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub fn parse_split(text: &str) -> Result<SplitAssignment, FormatError> {
    serde_json::from_str(text).map_err(|e| invalid("split", e))
}

pub fn load_split(path: &Path) -> Result<SplitAssignment, FormatError> {
    parse_split(&read_text(path, "run `kwvad induce` first")?)
}

pub fn parse_eval_report(text: &str) -> Result<EvalReport, FormatError> {
    serde_json::from_str(text).map_err(|e| invalid("eval report", e))
}

/// Human-readable report summary, in a fixed order.
pub fn eval_summary(r: &EvalReport) -> String {
    let mut out = String::new();
    writeln!(out, "frames          {}", r.n_frames).unwrap();
    writeln!(out, "auroc (micro)   {:.4}", r.auroc_micro).unwrap();
    match r.auroc_macro {
        Some(m) => writeln!(out, "auroc (macro)   {m:.4} over {} videos", r.per_video_auroc.len()).unwrap(),
        None => writeln!(out, "auroc (macro)   n/a").unwrap(),
    }
    if !r.skipped_videos.is_empty() {
        writeln!(out, "single-class videos skipped: {}", r.skipped_videos.len()).unwrap();
    }
    writeln!(out, "threshold       {}", r.threshold).unwrap();
    writeln!(out, "tp {}  fp {}  tn {}  fn {}", r.tp, r.fp, r.tn, r.fn_).unwrap();
    out
}

fn csv_bytes(f: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>) -> String {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        f(&mut w).expect("writing csv to memory");
        w.flush().expect("flushing csv to memory");
    }
    String::from_utf8(buf).expect("csv is utf-8")
}

/// `frame_id,label,score` per frame.
pub fn render_scores(frames: &[ScoredFrame]) -> String {
    csv_bytes(|w| {
        w.write_record(["frame_id", "label", "score"])?;
        for f in frames {
            w.write_record([f.frame_id.as_str(), &f.label.bit().to_string(), &f.score.to_string()])?;
        }
        Ok(())
    })
}

pub fn parse_scores(text: &str) -> Result<Vec<(String, Label, f64)>, FormatError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| malformed("scores", line, e.to_string()))?;
        let (Some(id), Some(label), Some(score)) = (rec.get(0), rec.get(1), rec.get(2)) else {
            return Err(malformed("scores", line, "expected 3 fields"));
        };
        let label = label
            .parse()
            .ok()
            .and_then(Label::from_bit)
            .ok_or_else(|| malformed("scores", line, "bad label"))?;
        let score = score.parse().map_err(|_| malformed("scores", line, "bad score"))?;
        out.push((id.to_string(), label, score));
    }
    Ok(out)
}

/// A labeled encoding row for the heatmap matrix.
pub struct EncodedRow<'a> {
    pub encoding: &'a Encoding,
    pub label: Option<Label>,
    pub score: Option<f64>,
}

/// `frame_id,label,score,<term...>`: the encoding matrix with one column
/// per keyword. Unknown labels or scores are left empty.
pub fn render_encodings(model: &KeywordModel, rows: &[EncodedRow<'_>]) -> String {
    csv_bytes(|w| {
        let mut header = vec!["frame_id", "label", "score"];
        header.extend(model.terms().iter().map(String::as_str));
        w.write_record(&header)?;
        for r in rows {
            let mut rec = vec![
                r.encoding.frame_id.clone(),
                r.label.map(|l| l.bit().to_string()).unwrap_or_default(),
                r.score.map(|s| s.to_string()).unwrap_or_default(),
            ];
            rec.extend(r.encoding.values.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Description store

/// One JSON record per line, sorted by frame id.
pub fn render_descriptions<'a>(records: impl IntoIterator<Item = &'a DescriptionRecord>) -> String {
    let mut sorted: Vec<&DescriptionRecord> = records.into_iter().collect();
    sorted.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    let mut out = String::new();
    for r in sorted {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_descriptions(text: &str) -> Result<Vec<DescriptionRecord>, FormatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| malformed("description store", i + 1, e.to_string())))
        .collect()
}

/// Reads a description store; a missing file is an empty store.
pub fn load_descriptions(path: &Path) -> Result<Vec<DescriptionRecord>, FormatError> {
    match std::fs::read_to_string(path) {
        Ok(text) => parse_descriptions(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(source) => Err(FormatError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}
