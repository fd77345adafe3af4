//! The pipeline commands behind the CLI. Each validates everything it can
//! (config, manifest, upstream artifacts) before writing anything.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use kwvad_core::classifier::{predict, train};
use kwvad_core::dataset::{make_splits, sample_induction_frames, Dataset, FrameRecord, Label, SplitAssignment};
use kwvad_core::deduction::{Encoder, Encoding};
use kwvad_core::induction::{induce, Provenance};
use kwvad_core::metrics::{EvalReport, ScoredFrame};
use kwvad_core::{KeywordModel, TrainedModel};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::describer::{
    BatchOutcome, Describer, DescriptionCache, DescriptionRecord, HttpProvider, Provider, StubProvider,
};
use crate::error::{Error, Result, Stage, StageExt};
use crate::formats::{self, EncodedRow};
use crate::manifest::load_manifest;

/// Where each artifact lives under the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("split.json")
    }
    pub fn keywords(&self) -> PathBuf {
        self.root.join("keywords.tsv")
    }
    pub fn top_keywords(&self) -> PathBuf {
        self.root.join("keywords_top.tsv")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }
    pub fn fold_metrics(&self) -> PathBuf {
        self.root.join("fold_metrics.tsv")
    }
    pub fn eval(&self) -> PathBuf {
        self.root.join("eval.json")
    }
    pub fn scores(&self) -> PathBuf {
        self.root.join("scores.csv")
    }
    pub fn test_encodings(&self) -> PathBuf {
        self.root.join("test_encodings.csv")
    }
    pub fn descriptions(&self, dataset: &str) -> PathBuf {
        self.root.join("descriptions").join(format!("{dataset}.jsonl"))
    }
    pub fn infer(&self, frame_id: &str, ext: &str) -> PathBuf {
        let safe: String = frame_id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        self.root.join("infer").join(format!("{safe}.{ext}"))
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    formats::write_atomic(path, contents.as_bytes())?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Shared state of one command run.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub layout: Layout,
    dataset: Dataset,
    describer: Describer,
}

impl Pipeline {
    /// Loads the manifest and sets up the description provider.
    pub fn open(config: PipelineConfig) -> Result<Self> {
        let dataset = load_manifest(&config.manifest)
            .map(|mut d| {
                d.name = config.dataset_name.clone();
                d
            })
            .stage(Stage::Config)?;
        let provider: Box<dyn Provider> = match &config.stub {
            Some(map) => Box::new(
                StubProvider::from_map_file(map)
                    .map_err(|e| Error::io(map, e))
                    .stage(Stage::Config)?,
            ),
            None => Box::new(HttpProvider::new(config.provider.clone()).stage(Stage::Describe)?),
        };
        let cache = DescriptionCache::open(&config.cache_dir).stage(Stage::Describe)?;
        let describer = Describer::new(provider, config.provider.clone(), Some(cache));
        Ok(Self {
            layout: Layout::new(&config.output_dir),
            config,
            dataset,
            describer,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn describer(&self) -> &Describer {
        &self.describer
    }

    /// Describes frames (through the cache), merges the results into the
    /// dataset's description store and returns them by frame id. Frames
    /// that fail are logged and left out.
    fn describe(&self, frames: &[FrameRecord]) -> Result<BTreeMap<String, String>> {
        let outcome = self.describer.batch_describe(frames).stage(Stage::Describe)?;
        log::info!("descriptions: {}", outcome.summary());
        for (id, e) in &outcome.failures {
            log::warn!("frame {id}: {e}");
        }
        self.store(&outcome.records)?;
        Ok(outcome.records.into_iter().map(|r| (r.frame_id, r.text)).collect())
    }

    fn store(&self, records: &[DescriptionRecord]) -> Result<()> {
        if records.is_empty() {
            return Ok(());
        }
        let path = self.layout.descriptions(&self.dataset.name);
        let mut all: BTreeMap<String, DescriptionRecord> = formats::load_descriptions(&path)
            .stage(Stage::Describe)?
            .into_iter()
            .map(|r| (r.frame_id.clone(), r))
            .collect();
        for r in records {
            all.insert(r.frame_id.clone(), r.clone());
        }
        write(&path, &formats::render_descriptions(all.values()))
    }

    fn frames(&self, ids: &BTreeSet<String>) -> Vec<FrameRecord> {
        self.dataset.select(ids)
    }

    /// Split file written by `induce`, checked against the current config.
    fn load_split(&self) -> Result<SplitAssignment> {
        let split = formats::load_split(&self.layout.split())?;
        if split.seed != self.config.split_seed || split.ratio != self.config.train_ratio {
            return Err(Error::Data(format!(
                "{} was made with seed {} and ratio {}, config has seed {} and ratio {}; rerun `kwvad induce`",
                self.layout.split().display(),
                split.seed,
                split.ratio,
                self.config.split_seed,
                self.config.train_ratio
            )));
        }
        for id in split.train.iter().chain(&split.test) {
            if self.dataset.get(id).is_none() {
                return Err(Error::Data(format!("split frame {id:?} is not in the manifest")));
            }
        }
        Ok(split)
    }

    /// Encodes the described frames among `frames`, in dataset order.
    fn encode(
        &self,
        model: &KeywordModel,
        frames: &[FrameRecord],
        texts: &BTreeMap<String, String>,
    ) -> Vec<(FrameRecord, Encoding)> {
        let encoder = Encoder::new(model);
        frames
            .iter()
            .filter_map(|f| {
                texts
                    .get(&f.frame_id)
                    .map(|t| (f.clone(), encoder.encode(&f.frame_id, t)))
            })
            .collect()
    }

    /// Describes every frame in the manifest (cache warm-up).
    pub fn cmd_describe(&self) -> Result<BatchOutcome> {
        let outcome = self
            .describer
            .batch_describe(self.dataset.frames())
            .stage(Stage::Describe)?;
        self.store(&outcome.records)?;
        Ok(outcome)
    }

    /// Samples induction frames, splits the rest, derives keyword weights.
    pub fn cmd_induce(&self) -> Result<KeywordModel> {
        let c = &self.config;
        let sample =
            sample_induction_frames(&self.dataset, c.induction_samples, c.induction_seed).stage(Stage::Induce)?;
        let split =
            make_splits(&self.dataset, &sample.frame_ids(), c.train_ratio, c.split_seed).stage(Stage::Induce)?;

        let mut frames = sample.normal.clone();
        frames.extend(sample.anomalous.iter().cloned());
        let texts = self.describe(&frames)?;
        let pick = |side: &[FrameRecord]| -> Vec<&str> {
            side.iter()
                .filter_map(|f| texts.get(&f.frame_id).map(String::as_str))
                .collect()
        };
        let provenance = Provenance {
            dataset: self.dataset.name.clone(),
            seed: c.induction_seed,
            model_id: c.provider.model_id.clone(),
        };
        let model = induce(
            &pick(&sample.normal),
            &pick(&sample.anomalous),
            &c.vectorizer,
            provenance,
        )
        .stage(Stage::Induce)?;

        write(&self.layout.split(), &formats::render_json(&split))?;
        write(&self.layout.keywords(), &formats::render_keyword_model(&model))?;
        write(&self.layout.top_keywords(), &formats::render_top_keywords(&model))?;
        Ok(model)
    }

    /// Encodes the training split and fits the classifier.
    pub fn cmd_train(&self) -> Result<TrainedModel> {
        let model = formats::load_keyword_model(&self.layout.keywords()).stage(Stage::Train)?;
        let split = self.load_split().stage(Stage::Train)?;
        let frames = self.frames(&split.train);
        let texts = self.describe(&frames)?;
        let samples: Vec<(Encoding, Label)> = self
            .encode(&model, &frames, &texts)
            .into_iter()
            .map(|(f, e)| (e, f.label))
            .collect();
        let trained = train(&samples, &self.config.training).stage(Stage::Train)?;
        write(&self.layout.model(), &formats::render_trained_model(&trained))?;
        write(
            &self.layout.fold_metrics(),
            &formats::render_fold_metrics(&trained.fold_metrics, trained.chosen_fold),
        )?;
        Ok(trained)
    }

    /// Scores the test split and writes the report, score dump and encoding
    /// matrix.
    pub fn cmd_eval(&self) -> Result<EvalReport> {
        let model = formats::load_keyword_model(&self.layout.keywords()).stage(Stage::Eval)?;
        let trained = formats::load_trained_model(&self.layout.model()).stage(Stage::Eval)?;
        let split = self.load_split().stage(Stage::Eval)?;
        let frames = self.frames(&split.test);
        let texts = self.describe(&frames)?;
        let encoded = self.encode(&model, &frames, &texts);
        let mut scored = Vec::with_capacity(encoded.len());
        for (f, e) in &encoded {
            scored.push(ScoredFrame {
                frame_id: f.frame_id.clone(),
                video_id: f.video_id.clone(),
                label: f.label,
                score: predict(&trained, e).stage(Stage::Eval)?,
            });
        }
        let report = EvalReport::from_frames(&scored, self.config.threshold).stage(Stage::Eval)?;
        let rows: Vec<EncodedRow<'_>> = encoded
            .iter()
            .zip(&scored)
            .map(|((f, e), s)| EncodedRow {
                encoding: e,
                label: Some(f.label),
                score: Some(s.score),
            })
            .collect();
        write(&self.layout.eval(), &formats::render_json(&report))?;
        write(&self.layout.scores(), &formats::render_scores(&scored))?;
        write(&self.layout.test_encodings(), &formats::render_encodings(&model, &rows))?;
        Ok(report)
    }

    /// Classifies one frame, given by manifest id or image path.
    pub fn cmd_infer(&self, target: &str) -> Result<Prediction> {
        let model = formats::load_keyword_model(&self.layout.keywords()).stage(Stage::Infer)?;
        let trained = formats::load_trained_model(&self.layout.model()).stage(Stage::Infer)?;
        let frame = match self.dataset.get(target) {
            Some(f) => f.clone(),
            None => {
                let path = Path::new(target);
                if !path.is_file() {
                    return Err(Error::Data(format!(
                        "{target:?} is neither a frame id in the manifest nor an image file"
                    )))
                    .stage(Stage::Infer);
                }
                let id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                self.dataset
                    .frames()
                    .iter()
                    .find(|f| Path::new(&f.path) == path)
                    .cloned()
                    .unwrap_or(FrameRecord {
                        frame_id: id,
                        video_id: String::new(),
                        path: target.to_string(),
                        label: Label::Normal,
                    })
            }
        };
        let known = self.dataset.get(&frame.frame_id).is_some();
        let record = self.describer.describe_frame(&frame).stage(Stage::Describe)?;
        self.store(std::slice::from_ref(&record))?;
        let encoding = Encoder::new(&model).encode(&frame.frame_id, &record.text);
        let probability = predict(&trained, &encoding).stage(Stage::Infer)?;
        let prediction = Prediction::new(
            &model,
            &encoding,
            &record.text,
            probability,
            self.config.threshold,
            known.then_some(frame.label),
        );
        write(
            &self.layout.infer(&frame.frame_id, "json"),
            &formats::render_json(&prediction),
        )?;
        let row = EncodedRow {
            encoding: &encoding,
            label: prediction.label,
            score: Some(probability),
        };
        write(
            &self.layout.infer(&frame.frame_id, "csv"),
            &formats::render_encodings(&model, &[row]),
        )?;
        Ok(prediction)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PresentKeyword {
    pub term: String,
    pub weight: f64,
}

/// One frame's classification with what drove it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub frame_id: String,
    pub probability: f64,
    pub threshold: f64,
    pub decision: &'static str,
    /// Ground truth when the frame is in the manifest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub description: String,
    pub present_keywords: Vec<PresentKeyword>,
    pub encoding: Vec<f64>,
}

impl Prediction {
    pub fn new(
        model: &KeywordModel,
        encoding: &Encoding,
        description: &str,
        probability: f64,
        threshold: f64,
        label: Option<Label>,
    ) -> Self {
        Self {
            frame_id: encoding.frame_id.clone(),
            probability,
            threshold,
            decision: decision(probability, threshold),
            label,
            description: description.to_string(),
            present_keywords: encoding
                .present_terms
                .iter()
                .map(|&j| PresentKeyword {
                    term: model.terms()[j].clone(),
                    weight: model.weights()[j],
                })
                .collect(),
            encoding: encoding.values.clone(),
        }
    }
}

/// Anomalous when the probability is strictly above the threshold.
pub fn decision(probability: f64, threshold: f64) -> &'static str {
    if probability > threshold {
        "anomalous"
    } else {
        "normal"
    }
}
