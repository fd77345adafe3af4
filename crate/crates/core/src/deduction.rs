//! Keyword encoding of a single frame description.
//!
//! Component `j` of the encoding is the weight of keyword `j` when that
//! keyword occurs as a token of the description, and zero otherwise.
//! Occurrence counts do not matter and there is no stemming.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::induction::KeywordModel;
use crate::text::tokenize;

#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub frame_id: String,
    pub values: Vec<f64>,
    /// Indices of keywords found in the description, ascending.
    pub present_terms: Vec<usize>,
    /// [`KeywordModel::content_hash`] of the model that produced this.
    pub keyword_model_hash: u64,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn nonzero(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

/// Encodes many descriptions against one model without re-deriving the
/// term index or hash each time.
#[derive(Clone, Debug)]
pub struct Encoder<'m> {
    model: &'m KeywordModel,
    index: BTreeMap<&'m str, usize>,
    hash: u64,
}

impl<'m> Encoder<'m> {
    pub fn new(model: &'m KeywordModel) -> Self {
        let index = model.terms().iter().enumerate().map(|(j, t)| (t.as_str(), j)).collect();
        Self {
            model,
            index,
            hash: model.content_hash(),
        }
    }

    pub fn model(&self) -> &KeywordModel {
        self.model
    }

    pub fn keyword_model_hash(&self) -> u64 {
        self.hash
    }

    pub fn encode(&self, frame_id: &str, description: &str) -> Encoding {
        let present: BTreeSet<usize> = tokenize(description)
            .iter()
            .filter_map(|tok| self.index.get(tok.as_str()).copied())
            .collect();
        let mut values = vec![0.0; self.model.len()];
        for &j in &present {
            values[j] = self.model.weights()[j];
        }
        Encoding {
            frame_id: String::from(frame_id),
            values,
            present_terms: present.into_iter().collect(),
            keyword_model_hash: self.hash,
        }
    }
}

pub fn encode(frame_id: &str, description: &str, model: &KeywordModel) -> Encoding {
    Encoder::new(model).encode(frame_id, description)
}
