use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::{DescribeError, FrameImage, Provider, Reply};

/// Tracks concurrent calls into a [`StubProvider`].
#[derive(Clone, Debug, Default)]
pub struct Gauge(Arc<GaugeInner>);

#[derive(Debug, Default)]
struct GaugeInner {
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
}

impl Gauge {
    pub fn calls(&self) -> usize {
        self.0.calls.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.0.max_in_flight.load(Ordering::SeqCst)
    }

    fn enter(&self) {
        self.0.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.0.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.0.max_in_flight.fetch_max(now, Ordering::SeqCst);
    }

    fn leave(&self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Answers from a fixed frame-id → text map. Frames missing from the map are
/// rejected with status 404.
#[derive(Debug, Default)]
pub struct StubProvider {
    texts: BTreeMap<String, String>,
    latency: BTreeMap<String, Duration>,
    gauge: Gauge,
}

impl StubProvider {
    pub fn new(texts: BTreeMap<String, String>) -> Self {
        Self {
            texts,
            ..Self::default()
        }
    }

    /// Per-frame artificial delay.
    pub fn with_latency(mut self, latency: BTreeMap<String, Duration>) -> Self {
        self.latency = latency;
        self
    }

    /// Reads a map file of `frame_id<TAB>text` lines; `#` starts a comment.
    pub fn from_map_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut texts = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, desc) = line.split_once('\t').ok_or_else(|| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: expected frame_id<TAB>text", path.display(), n + 1),
                )
            })?;
            texts.insert(id.to_string(), desc.to_string());
        }
        Ok(Self::new(texts))
    }

    pub fn gauge(&self) -> Gauge {
        self.gauge.clone()
    }
}

impl Provider for StubProvider {
    fn describe(&self, image: &FrameImage, _prompt: &str, _model_id: &str) -> Result<Reply, DescribeError> {
        self.gauge.enter();
        if let Some(d) = self.latency.get(&image.frame_id) {
            std::thread::sleep(*d);
        }
        let result = match self.texts.get(&image.frame_id) {
            Some(text) => Ok(Reply {
                text: text.clone(),
                metadata: BTreeMap::new(),
            }),
            None => Err(DescribeError::ProviderRejected {
                status: 404,
                body: format!("stub has no description for frame {}", image.frame_id),
            }),
        };
        self.gauge.leave();
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("map.tsv");
        std::fs::write(&p, "# comment\nf1\ta dog\tand a cat\n\nf2\tempty street\n").unwrap();
        let stub = StubProvider::from_map_file(&p).unwrap();
        assert_eq!(stub.texts["f1"], "a dog\tand a cat");
        assert_eq!(stub.texts.len(), 2);
        std::fs::write(&p, "no tab here\n").unwrap();
        assert!(StubProvider::from_map_file(&p).is_err());
    }
}
