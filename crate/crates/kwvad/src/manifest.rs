//! Line-delimited dataset manifests.
//!
//! One frame per line, tab separated: `frame_id  video_id  path  label`,
//! with label `0` (normal) or `1` (anomalous). Lines starting with `#` and
//! blank lines are ignored. Relative image paths resolve against the
//! manifest's directory.

use std::path::{Path, PathBuf};

use kwvad_core::dataset::{Dataset, DatasetError, FrameRecord, Label};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest {0} does not exist")]
    MissingFile(PathBuf),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate frame id {0:?}")]
    DuplicateFrameId(String),
}

/// Parses manifest text. `base` anchors relative image paths.
pub fn parse_manifest(name: &str, text: &str, base: Option<&Path>) -> Result<Dataset, ManifestError> {
    let mut frames = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| ManifestError::MalformedRecord { line, reason };
        let fields: Vec<&str> = raw.split('\t').collect();
        let [frame_id, video_id, path, label] = fields[..] else {
            return Err(malformed(format!(
                "expected 4 tab-separated fields, found {}",
                fields.len()
            )));
        };
        if frame_id.is_empty() {
            return Err(malformed("empty frame_id".into()));
        }
        if path.is_empty() {
            return Err(malformed("empty path".into()));
        }
        let label = match label.trim() {
            "0" => Label::Normal,
            "1" => Label::Anomalous,
            other => return Err(malformed(format!("label {other:?} is not 0 or 1"))),
        };
        let path = match base {
            Some(dir) if Path::new(path).is_relative() => dir.join(path),
            _ => PathBuf::from(path),
        };
        frames.push(FrameRecord {
            frame_id: frame_id.to_string(),
            video_id: video_id.to_string(),
            path: path.to_string_lossy().into_owned(),
            label,
        });
    }
    Dataset::new(name, frames).map_err(|e| match e {
        DatasetError::DuplicateFrameId(id) => ManifestError::DuplicateFrameId(id),
        other => unreachable!("Dataset::new only rejects duplicates: {other}"),
    })
}

/// Loads a manifest; the dataset is named after the file stem.
pub fn load_manifest(path: &Path) -> Result<Dataset, ManifestError> {
    if !path.exists() {
        return Err(ManifestError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_manifest(&name, &text, path.parent())
}

/// Renders frames back to manifest lines (paths written as stored).
pub fn render_manifest(frames: &[FrameRecord]) -> String {
    let mut out = String::from("# frame_id\tvideo_id\tpath\tlabel\n");
    for f in frames {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            f.frame_id,
            f.video_id,
            f.path,
            f.label.bit()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_records() {
        let text = "# comment\nf1\tv1\ta.png\t0\nf2\tv1\tb.png\t0\n\nf3\tv2\t/abs/c.png\t1\n";
        let ds = parse_manifest("toy", text, Some(Path::new("/data"))).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.count(Label::Anomalous), 1);
        assert_eq!(ds.frames()[0].path, "/data/a.png");
        assert_eq!(ds.frames()[2].path, "/abs/c.png");
        assert_eq!(ds.frames()[2].video_id, "v2");
    }

    #[test]
    fn empty_file() {
        assert!(parse_manifest("empty", "", None).unwrap().is_empty());
    }

    #[test]
    fn duplicate_id() {
        let err = parse_manifest("dup", "f1\tv\ta\t0\nf1\tv\tb\t1\n", None).unwrap_err();
        assert!(matches!(err, ManifestError::DuplicateFrameId(id) if id == "f1"));
    }

    #[test]
    fn malformed_lines_report_line_number() {
        for (text, line) in [
            ("f1\tv\ta\t0\nf2\tv\tb\n", 2),
            ("f1\tv\ta\t2\n", 1),
            ("# c\n\tv\ta\t0\n", 2),
            ("f1 v a 0\n", 1),
        ] {
            match parse_manifest("bad", text, None) {
                Err(ManifestError::MalformedRecord { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_manifest(Path::new("/definitely/not/here.tsv")),
            Err(ManifestError::MissingFile(_))
        ));
    }

    #[test]
    fn render_then_parse() {
        let ds = parse_manifest("toy", "f1\tv1\t/x/a.png\t0\nf2\tv2\t/x/b.png\t1\n", None).unwrap();
        let again = parse_manifest("toy", &render_manifest(ds.frames()), None).unwrap();
        assert_eq!(ds, again);
    }
}
