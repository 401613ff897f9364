//! JSONL update-stream files.
//!
//! Line 1 is a header object with the dimension, label type, optional
//! variance half-range `c`, and optional declared maximum active-set size.
//! Every following line is one update request:
//! `{"op":"ins","x":[...],"y":...}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use dyntree::multiset::{FeatureVector, Label, LabeledExample, UpdateOp, UpdateRequest};

pub const STREAM_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelType {
    Class,
    Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamHeader {
    pub version: u32,
    pub d: usize,
    pub label_type: LabelType,
    /// Variance half-range (`sup |y| / 2`); required for the variance gain.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Declared bound on the active-set size; the entropy-gain epsilon
    /// depends on it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StreamRecord {
    op: UpdateOp,
    x: Vec<f64>,
    y: Label,
}

/// One parsed update plus the 1-based line it came from (for error
/// reporting).
#[derive(Debug, Clone)]
pub struct StreamLine {
    pub line: usize,
    pub request: UpdateRequest,
}

pub fn read_stream(path: &Path) -> anyhow::Result<(StreamHeader, Vec<StreamLine>)> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| anyhow!("{}: empty stream file", path.display()))??;
    let header: StreamHeader =
        serde_json::from_str(&header_line).with_context(|| "line 1: malformed header")?;
    if header.version != STREAM_VERSION {
        bail!("line 1: unsupported stream version {}", header.version);
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: StreamRecord = serde_json::from_str(&text)
            .with_context(|| format!("line {line_no}: malformed record"))?;
        if rec.x.len() != header.d {
            bail!(
                "line {line_no}: expected {} features, got {}",
                header.d,
                rec.x.len()
            );
        }
        if rec.x.iter().any(|v| !v.is_finite()) {
            bail!("line {line_no}: non-finite feature value");
        }
        let y = match (header.label_type, rec.y) {
            (LabelType::Class, Label::Class(c)) => Label::Class(c),
            (LabelType::Real, Label::Real(v)) if v.is_finite() => Label::Real(v),
            (LabelType::Real, Label::Class(c)) => Label::Real(c as f64),
            _ => bail!("line {line_no}: label does not match declared label_type"),
        };
        let x = FeatureVector::new(rec.x).map_err(|e| anyhow!("line {line_no}: {e}"))?;
        out.push(StreamLine {
            line: line_no,
            request: UpdateRequest {
                example: LabeledExample::new(x, y),
                op: rec.op,
            },
        });
    }
    Ok((header, out))
}

pub fn write_stream(
    path: &Path,
    header: &StreamHeader,
    requests: &[UpdateRequest],
) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for r in requests {
        let rec = StreamRecord {
            op: r.op,
            x: r.example.x.values().to_vec(),
            y: r.example.y,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = std::env::temp_dir().join(format!("dyntree-stream-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.jsonl");
        let header = StreamHeader {
            version: STREAM_VERSION,
            d: 2,
            label_type: LabelType::Class,
            c: None,
            n_max: Some(100),
        };
        let reqs = vec![
            UpdateRequest::ins(LabeledExample::new(
                FeatureVector::new(vec![0.5, -1.0]).unwrap(),
                Label::Class(1),
            )),
            UpdateRequest::del(LabeledExample::new(
                FeatureVector::new(vec![0.5, -1.0]).unwrap(),
                Label::Class(1),
            )),
        ];
        write_stream(&path, &header, &reqs).unwrap();
        let (h2, lines) = read_stream(&path).unwrap();
        assert_eq!(h2.d, 2);
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].line, 2);
        assert_eq!(lines[0].request, reqs[0]);
        assert_eq!(lines[1].request, reqs[1]);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn dimension_mismatch_is_reported_with_line() {
        let dir = std::env::temp_dir().join(format!("dyntree-stream2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"version\":1,\"d\":2,\"label_type\":\"class\"}\n{\"op\":\"ins\",\"x\":[1.0],\"y\":0}\n",
        )
        .unwrap();
        let err = read_stream(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }
}
