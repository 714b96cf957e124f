use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::LayerMatrix;

use super::codec::{self, Reader, Writer};

pub const RECORD_MAGIC: &[u8; 8] = b"CLUETRAJ";

/// Ground-truth label of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Failure,
    Success,
    Unlabeled,
}

impl Label {
    pub fn to_byte(self) -> u8 {
        match self {
            Label::Failure => 0,
            Label::Success => 1,
            Label::Unlabeled => 255,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Label::Failure),
            1 => Ok(Label::Success),
            255 => Ok(Label::Unlabeled),
            other => Err(Error::Metadata(format!("unknown label byte {other}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Failure => "failure",
            Label::Success => "success",
            Label::Unlabeled => "unlabeled",
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Label::Unlabeled
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "success" => Ok(Label::Success),
            "failure" => Ok(Label::Failure),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(Error::Metadata(format!("unknown label {other:?}"))),
        }
    }
}

/// One solution attempt with its boundary hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub record_id: String,
    pub problem_id: String,
    /// Canonical answer string; empty when unavailable.
    pub answer: String,
    pub label: Label,
    pub model_tag: String,
    pub h_start: LayerMatrix,
    pub h_end: LayerMatrix,
}

impl TrajectoryRecord {
    pub fn validate(&self) -> Result<()> {
        if self.record_id.is_empty() {
            return Err(Error::Metadata("record_id is empty".into()));
        }
        self.h_start.check_same_shape(&self.h_end)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.h_start.shape()
    }
}

/// Metadata and shape of a record, read without its payload.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub record_id: String,
    pub problem_id: String,
    pub answer: String,
    pub label: Label,
    pub model_tag: String,
    pub num_layers: usize,
    pub dim: usize,
}

pub fn encode_record(record: &TrajectoryRecord) -> Result<Vec<u8>> {
    record.validate()?;
    let mut meta = Vec::new();
    codec::put_str(&mut meta, &record.record_id)?;
    codec::put_str(&mut meta, &record.problem_id)?;
    codec::put_str(&mut meta, &record.answer)?;
    meta.push(record.label.to_byte());
    codec::put_str(&mut meta, &record.model_tag)?;

    let mut w = Writer::new(RECORD_MAGIC);
    w.u32(u32::try_from(meta.len()).map_err(|_| Error::Metadata("metadata too long".into()))?);
    w.bytes(&meta);
    codec::put_shape(&mut w, &record.h_start)?;
    codec::put_matrix(&mut w, &record.h_start);
    codec::put_matrix(&mut w, &record.h_end);
    Ok(w.into_inner())
}

fn decode_header(r: &mut Reader<'_>) -> Result<RecordHeader> {
    r.magic(RECORD_MAGIC)?;
    let meta_len = r.u32("metadata length")? as usize;
    let mut meta = r.sub(meta_len, "metadata")?;
    let record_id = meta.string("record_id")?;
    let problem_id = meta.string("problem_id")?;
    let answer = meta.string("answer")?;
    let label = Label::from_byte(meta.u8("label")?)?;
    let model_tag = meta.string("model_tag")?;
    meta.finish()
        .map_err(|_| Error::Metadata("metadata block has extra bytes".into()))?;
    if record_id.is_empty() {
        return Err(Error::Metadata("record_id is empty".into()));
    }
    let (num_layers, dim) = r.shape()?;
    Ok(RecordHeader {
        record_id,
        problem_id,
        answer,
        label,
        model_tag,
        num_layers,
        dim,
    })
}

pub fn decode_record(bytes: &[u8]) -> Result<TrajectoryRecord> {
    let mut r = Reader::new(bytes);
    let h = decode_header(&mut r)?;
    let h_start = r.matrix(h.num_layers, h.dim)?;
    let h_end = r.matrix(h.num_layers, h.dim)?;
    r.finish()?;
    Ok(TrajectoryRecord {
        record_id: h.record_id,
        problem_id: h.problem_id,
        answer: h.answer,
        label: h.label,
        model_tag: h.model_tag,
        h_start,
        h_end,
    })
}

/// Writes `record` atomically (temp file + rename).
pub fn write_record(record: &TrajectoryRecord, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_record(record)?;
    codec::write_atomic(path.as_ref(), &bytes)
}

pub fn read_record(path: impl AsRef<Path>) -> Result<TrajectoryRecord> {
    decode_record(&codec::read_file(path.as_ref())?)
}

/// Reads the metadata block and shape header only.
pub fn read_record_header(path: impl AsRef<Path>) -> Result<RecordHeader> {
    let path = path.as_ref();
    // Metadata is length-prefixed; read a prefix and widen once if needed.
    let mut prefix = codec::read_prefix(path, 4096)?;
    if prefix.len() >= 14 {
        let meta_len = u32::from_le_bytes(prefix[10..14].try_into().unwrap()) as usize;
        let needed = 14 + meta_len + 9;
        if needed > prefix.len() {
            prefix = codec::read_prefix(path, needed)?;
        }
    }
    decode_header(&mut Reader::new(&prefix))
}
