//! Keyword induction over a two-document corpus.
//!
//! The normal descriptions are joined into one document and the anomalous
//! descriptions into another. Terms are scored with classic TF-IDF
//!
//! ```text
//! tf(t, d)     = count(t, d) / |d|
//! idf(t, C)    = ln(N / df(t)),   N = 2
//! tfidf(t, d)  = tf(t, d) * idf(t, C)
//! ```
//!
//! and the keyword weights are the L2-normalized difference between the
//! anomalous and normal score rows. With two documents a term present in
//! both has `idf = 0`, so every non-zero weight belongs to a term seen on
//! exactly one side: positive for anomalous, negative for normal.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::hash::ContentHasher;
use crate::text::{tokenize, StopList};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Normal,
    Anomalous,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Normal, Side::Anomalous];

    pub fn row(self) -> usize {
        match self {
            Side::Normal => 0,
            Side::Anomalous => 1,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Normal => "normal",
            Side::Anomalous => "anomalous",
        })
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum InductionError {
    #[error("no {0} descriptions to build the corpus from")]
    EmptyDescriptionSet(Side),
    #[error("every term was filtered out of the vocabulary")]
    EmptyVocabulary,
    #[error("the {0} document has no tokens after stop-word removal")]
    EmptyDocument(Side),
    #[error("term frequency of an empty token list")]
    EmptyTokenList,
    #[error("term {0:?} occurs in no document")]
    DivisionByZeroDocFreq(String),
    #[error("anomalous and normal scores are identical; keyword weights are undefined")]
    ZeroDifferenceVector,
    #[error("invalid vectorizer config: {0}")]
    InvalidConfig(String),
    #[error("invalid keyword model: {0}")]
    InvalidModel(String),
}

/// The normal and anomalous documents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub doc_normal: String,
    pub doc_anomalous: String,
}

impl Corpus {
    pub const DOCUMENTS: usize = 2;

    pub fn document(&self, side: Side) -> &str {
        match side {
            Side::Normal => &self.doc_normal,
            Side::Anomalous => &self.doc_anomalous,
        }
    }
}

/// Joins each side's descriptions with single spaces, keeping input order.
pub fn build_corpus<S: AsRef<str>>(normal: &[S], anomalous: &[S]) -> Result<Corpus, InductionError> {
    fn join<S: AsRef<str>>(texts: &[S], side: Side) -> Result<String, InductionError> {
        if texts.is_empty() {
            return Err(InductionError::EmptyDescriptionSet(side));
        }
        let mut doc = String::new();
        for (i, t) in texts.iter().enumerate() {
            if i > 0 {
                doc.push(' ');
            }
            doc.push_str(t.as_ref());
        }
        Ok(doc)
    }
    Ok(Corpus {
        doc_normal: join(normal, Side::Normal)?,
        doc_anomalous: join(anomalous, Side::Anomalous)?,
    })
}

/// A document-frequency bound: a fraction of the document count or an
/// absolute number of documents.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum DfBound {
    Count(u32),
    Fraction(f64),
}

impl DfBound {
    fn check(self, name: &str) -> Result<(), InductionError> {
        match self {
            DfBound::Fraction(f) if !(0.0..=1.0).contains(&f) => Err(InductionError::InvalidConfig(alloc::format!(
                "{name} fraction {f} outside [0, 1]"
            ))),
            _ => Ok(()),
        }
    }

    /// Smallest admissible document count when used as a lower bound.
    pub fn min_count(self, documents: usize) -> usize {
        match self {
            DfBound::Count(c) => c as usize,
            DfBound::Fraction(f) => libm::ceil(f * documents as f64) as usize,
        }
    }

    /// Largest admissible document count when used as an upper bound.
    pub fn max_count(self, documents: usize) -> usize {
        match self {
            DfBound::Count(c) => c as usize,
            DfBound::Fraction(f) => libm::floor(f * documents as f64) as usize,
        }
    }
}

impl fmt::Display for DfBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DfBound::Count(c) => write!(f, "{c}"),
            DfBound::Fraction(x) => write!(f, "{x:?}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TfidfVariant {
    /// Classic `tf * ln(N / df)`, no row normalization.
    Classic,
    /// `tf * (ln((1 + N) / (1 + df)) + 1)` with L2-normalized rows, for
    /// cross-checking against common library defaults.
    Smoothed,
}

impl TfidfVariant {
    pub fn id(self) -> &'static str {
        match self {
            TfidfVariant::Classic => "classic",
            TfidfVariant::Smoothed => "smoothed",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "classic" => Some(TfidfVariant::Classic),
            "smoothed" => Some(TfidfVariant::Smoothed),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VectorizerConfig {
    /// Keep at most this many terms (the keyword count `k`).
    pub max_features: usize,
    pub min_df: DfBound,
    pub max_df: DfBound,
    /// Only unigrams are supported; kept so configs state it explicitly.
    pub ngram_n: u32,
    pub stop_words: StopList,
    #[cfg_attr(feature = "serde", serde(rename = "tfidf_variant"))]
    pub variant: TfidfVariant,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        Self {
            max_features: 200,
            min_df: DfBound::Fraction(0.0),
            max_df: DfBound::Fraction(1.0),
            ngram_n: 1,
            stop_words: StopList::English,
            variant: TfidfVariant::Classic,
        }
    }
}

impl VectorizerConfig {
    pub fn validate(&self) -> Result<(), InductionError> {
        if self.max_features == 0 {
            return Err(InductionError::InvalidConfig("max_features must be positive".into()));
        }
        if self.ngram_n != 1 {
            return Err(InductionError::InvalidConfig(alloc::format!(
                "ngram_n = {} is not supported (only 1)",
                self.ngram_n
            )));
        }
        self.min_df.check("min_df")?;
        self.max_df.check("max_df")?;
        let (lo, hi) = self.df_range();
        if lo > hi {
            return Err(InductionError::InvalidConfig(alloc::format!(
                "min_df ({}) admits more documents than max_df ({})",
                self.min_df,
                self.max_df
            )));
        }
        Ok(())
    }

    /// Inclusive document-count range a term must fall in, for N = 2.
    pub fn df_range(&self) -> (usize, usize) {
        (
            self.min_df.min_count(Corpus::DOCUMENTS),
            self.max_df.max_count(Corpus::DOCUMENTS),
        )
    }
}

/// Tokenizes a document and drops stop words.
pub fn document_tokens(document: &str, stop_words: StopList) -> Vec<String> {
    tokenize(document)
        .into_iter()
        .filter(|t| !stop_words.contains(t))
        .collect()
}

fn corpus_tokens(corpus: &Corpus, stop_words: StopList) -> [Vec<String>; 2] {
    Side::BOTH.map(|side| document_tokens(corpus.document(side), stop_words))
}

/// Selects the keyword set.
///
/// Terms outside the document-frequency range are dropped, the rest ranked
/// by total count (ties lexicographic), truncated to `max_features`, and the
/// survivors returned in lexicographic order.
pub fn build_vocabulary(corpus: &Corpus, config: &VectorizerConfig) -> Result<Vec<String>, InductionError> {
    config.validate()?;
    let docs = corpus_tokens(corpus, config.stop_words);
    // term -> (total count, document count)
    let mut stats: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for doc in &docs {
        let mut seen = BTreeSet::new();
        for tok in doc {
            let entry = stats.entry(tok.as_str()).or_insert((0, 0));
            entry.0 += 1;
            if seen.insert(tok.as_str()) {
                entry.1 += 1;
            }
        }
    }
    let (lo, hi) = config.df_range();
    let mut ranked: Vec<(&str, usize)> = stats
        .into_iter()
        .filter(|(_, (_, df))| (lo..=hi).contains(df))
        .map(|(term, (total, _))| (term, total))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(config.max_features);
    if ranked.is_empty() {
        return Err(InductionError::EmptyVocabulary);
    }
    let mut terms: Vec<String> = ranked.into_iter().map(|(t, _)| t.to_string()).collect();
    terms.sort_unstable();
    Ok(terms)
}

/// Relative frequency of `term` among `doc_tokens`.
pub fn tf<S: AsRef<str>>(term: &str, doc_tokens: &[S]) -> Result<f64, InductionError> {
    if doc_tokens.is_empty() {
        return Err(InductionError::EmptyTokenList);
    }
    let count = doc_tokens.iter().filter(|t| t.as_ref() == term).count();
    Ok(count as f64 / doc_tokens.len() as f64)
}

/// `ln(N / df)` over the given tokenized documents.
pub fn idf<S: AsRef<str>>(term: &str, docs: &[&[S]]) -> Result<f64, InductionError> {
    let df = docs.iter().filter(|d| d.iter().any(|t| t.as_ref() == term)).count();
    if df == 0 {
        return Err(InductionError::DivisionByZeroDocFreq(term.to_string()));
    }
    Ok(libm::log(docs.len() as f64 / df as f64))
}

/// Per-document scores for an ordered term list. Row 0 is the normal
/// document, row 1 the anomalous one.
#[derive(Clone, Debug, PartialEq)]
pub struct TfidfMatrix {
    pub terms: Vec<String>,
    pub scores: [Vec<f64>; 2],
}

impl TfidfMatrix {
    pub fn row(&self, side: Side) -> &[f64] {
        &self.scores[side.row()]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self.terms.clone(),
            scores: self
                .scores
                .clone()
                .map(|row| row.into_iter().map(|s| s * factor).collect()),
        }
    }
}

pub fn tfidf_matrix(
    corpus: &Corpus,
    terms: &[String],
    config: &VectorizerConfig,
) -> Result<TfidfMatrix, InductionError> {
    let docs = corpus_tokens(corpus, config.stop_words);
    let mut counts: [BTreeMap<&str, usize>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for (side, doc) in Side::BOTH.iter().zip(&docs) {
        if doc.is_empty() {
            return Err(InductionError::EmptyDocument(*side));
        }
        for tok in doc {
            *counts[side.row()].entry(tok.as_str()).or_insert(0) += 1;
        }
    }

    let n_docs = Corpus::DOCUMENTS as f64;
    let mut scores = [Vec::with_capacity(terms.len()), Vec::with_capacity(terms.len())];
    for term in terms {
        let df = counts.iter().filter(|c| c.contains_key(term.as_str())).count();
        if df == 0 {
            return Err(InductionError::DivisionByZeroDocFreq(term.clone()));
        }
        let idf = match config.variant {
            TfidfVariant::Classic => libm::log(n_docs / df as f64),
            TfidfVariant::Smoothed => libm::log((1.0 + n_docs) / (1.0 + df as f64)) + 1.0,
        };
        for side in Side::BOTH {
            let count = counts[side.row()].get(term.as_str()).copied().unwrap_or(0);
            let tf = count as f64 / docs[side.row()].len() as f64;
            scores[side.row()].push(tf * idf);
        }
    }
    if config.variant == TfidfVariant::Smoothed {
        for row in &mut scores {
            let norm = l2_norm(row);
            if norm > 0.0 {
                row.iter_mut().for_each(|s| *s /= norm);
            }
        }
    }
    Ok(TfidfMatrix {
        terms: terms.to_vec(),
        scores,
    })
}

pub(crate) fn l2_norm(values: &[f64]) -> f64 {
    libm::sqrt(values.iter().map(|v| v * v).sum())
}

/// Where a keyword model came from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub dataset: String,
    pub seed: u64,
    pub model_id: String,
}

/// Ordered keywords with unit-norm weights; the contract between induction
/// and deduction.
#[derive(Clone, Debug, PartialEq)]
pub struct KeywordModel {
    terms: Vec<String>,
    weights: Vec<f64>,
    pub vectorizer: VectorizerConfig,
    pub provenance: Provenance,
}

const NORM_TOLERANCE: f64 = 1e-9;

impl KeywordModel {
    /// Validates and assembles a model, e.g. one read back from disk.
    pub fn new(
        terms: Vec<String>,
        weights: Vec<f64>,
        vectorizer: VectorizerConfig,
        provenance: Provenance,
    ) -> Result<Self, InductionError> {
        let invalid = |msg: String| Err(InductionError::InvalidModel(msg));
        if terms.is_empty() {
            return invalid("no keywords".into());
        }
        if terms.len() != weights.len() {
            return invalid(alloc::format!("{} terms but {} weights", terms.len(), weights.len()));
        }
        let mut seen = BTreeSet::new();
        for t in &terms {
            if tokenize(t).as_slice() != [t.as_str()] {
                return invalid(alloc::format!("{t:?} is not a single lowercase token"));
            }
            if !seen.insert(t.as_str()) {
                return invalid(alloc::format!("duplicate keyword {t:?}"));
            }
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return invalid("non-finite weight".into());
        }
        let norm = l2_norm(&weights);
        if libm::fabs(norm - 1.0) > NORM_TOLERANCE {
            return invalid(alloc::format!("weight norm {norm} is not 1"));
        }
        Ok(Self {
            terms,
            weights,
            vectorizer,
            provenance,
        })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn weight(&self, term: &str) -> Option<f64> {
        self.terms.iter().position(|t| t == term).map(|j| self.weights[j])
    }

    /// Which document a keyword points to; `None` for zero weight.
    pub fn side(&self, j: usize) -> Option<Side> {
        let w = self.weights[j];
        if w > 0.0 {
            Some(Side::Anomalous)
        } else if w < 0.0 {
            Some(Side::Normal)
        } else {
            None
        }
    }

    /// Hash of the ordered terms and the exact weight bits. Trained
    /// classifiers carry it to refuse encodings from a different model.
    pub fn content_hash(&self) -> u64 {
        let mut h = ContentHasher::new();
        h.update(b"kwvad-keywords/1\n");
        for (t, w) in self.terms.iter().zip(&self.weights) {
            h.update(t.as_bytes()).update(&[0]).update(&w.to_bits().to_le_bytes());
        }
        h.finish()
    }
}

/// Normalized difference between the anomalous and normal rows.
pub fn derive_keyword_weights(
    matrix: &TfidfMatrix,
    vectorizer: VectorizerConfig,
    provenance: Provenance,
) -> Result<KeywordModel, InductionError> {
    let diff: Vec<f64> = matrix
        .row(Side::Anomalous)
        .iter()
        .zip(matrix.row(Side::Normal))
        .map(|(a, n)| a - n)
        .collect();
    let norm = l2_norm(&diff);
    if norm == 0.0 || !norm.is_finite() {
        return Err(InductionError::ZeroDifferenceVector);
    }
    let weights = diff.into_iter().map(|d| d / norm).collect();
    KeywordModel::new(matrix.terms.clone(), weights, vectorizer, provenance)
}

/// Corpus, vocabulary, scores and weights in one call.
pub fn induce<S: AsRef<str>>(
    normal: &[S],
    anomalous: &[S],
    vectorizer: &VectorizerConfig,
    provenance: Provenance,
) -> Result<KeywordModel, InductionError> {
    let corpus = build_corpus(normal, anomalous)?;
    let terms = build_vocabulary(&corpus, vectorizer)?;
    let matrix = tfidf_matrix(&corpus, &terms, vectorizer)?;
    derive_keyword_weights(&matrix, vectorizer.clone(), provenance)
}
