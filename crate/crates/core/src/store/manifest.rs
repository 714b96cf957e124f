//! Line-delimited manifest index over a directory of trajectory files.
//!
//! One record per line, tab separated:
//!
//! ```text
//! record_id  problem_id  label  answer  path  [flags]
//! ```
//!
//! `path` is relative to the manifest's directory. `flags` is optional; the
//! only flag is `truncated`. Lines starting with `#` are comments. Tabs,
//! newlines and backslashes inside fields are backslash-escaped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result, Shape};

use super::codec;
use super::record::{read_record, read_record_header, Label, TrajectoryRecord};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const RECORD_EXTENSION: &str = "traj";
const HEADER_LINE: &str = "#record_id\tproblem_id\tlabel\tanswer\tpath\tflags";
const TRUNCATED_FLAG: &str = "truncated";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub record_id: String,
    pub problem_id: String,
    pub label: Label,
    pub answer: String,
    /// Path relative to the manifest root.
    pub path: PathBuf,
    /// Set by producers whose reasoning block had no closing delimiter.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub success: usize,
    pub failure: usize,
    pub unlabeled: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub root: PathBuf,
    /// Sorted by `record_id`.
    pub entries: Vec<ManifestEntry>,
    /// `None` for an empty manifest.
    pub dims: Option<Shape>,
    pub model_tag: String,
    /// Non-fatal findings (mixed model tags and the like).
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn label_counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for e in &self.entries {
            match e.label {
                Label::Success => c.success += 1,
                Label::Failure => c.failure += 1,
                Label::Unlabeled => c.unlabeled += 1,
            }
        }
        c
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn get(&self, record_id: &str) -> Option<&ManifestEntry> {
        self.entries
            .binary_search_by(|e| e.record_id.as_str().cmp(record_id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Reads the full record behind `entry`, checking that its id matches.
    pub fn load(&self, entry: &ManifestEntry) -> Result<TrajectoryRecord> {
        let rec = read_record(self.entry_path(entry))?;
        if rec.record_id != entry.record_id {
            return Err(Error::Metadata(format!(
                "manifest lists {:?} but file holds {:?}",
                entry.record_id, rec.record_id
            )));
        }
        Ok(rec)
    }

    /// Drops entries flagged truncated, returning how many were removed.
    pub fn drop_truncated(&mut self) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| !e.truncated);
        before - self.entries.len()
    }
}

/// Builds a manifest from a manifest file, a directory containing
/// `manifest.tsv`, or a bare directory of `.traj` files.
pub fn scan_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let (root, entries) = if meta.is_dir() {
        let index = path.join(MANIFEST_FILE);
        if index.is_file() {
            (path.to_path_buf(), parse_manifest_file(&index)?)
        } else {
            (path.to_path_buf(), scan_directory(path)?)
        }
    } else {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (root, parse_manifest_file(path)?)
    };
    finalize(root, entries)
}

fn finalize(root: PathBuf, mut entries: Vec<ManifestEntry>) -> Result<Manifest> {
    entries.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    for pair in entries.windows(2) {
        if pair[0].record_id == pair[1].record_id {
            return Err(Error::DuplicateId(pair[0].record_id.clone()));
        }
    }

    let headers = entries
        .par_iter()
        .map(|e| {
            let h = read_record_header(root.join(&e.path))?;
            if h.record_id != e.record_id {
                return Err(Error::Metadata(format!(
                    "manifest lists {:?} but {} holds {:?}",
                    e.record_id,
                    e.path.display(),
                    h.record_id
                )));
            }
            Ok(h)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dims: Option<(Shape, &str)> = None;
    for h in &headers {
        let shape = (h.num_layers, h.dim);
        match dims {
            None => dims = Some((shape, &h.record_id)),
            Some((d, first)) if d != shape => {
                return Err(Error::DimensionDisagreement {
                    first: first.to_string(),
                    first_shape: d,
                    second: h.record_id.clone(),
                    second_shape: shape,
                })
            }
            Some(_) => {}
        }
    }

    let model_tag = headers.first().map(|h| h.model_tag.clone()).unwrap_or_default();
    let mut warnings = Vec::new();
    if let Some(h) = headers.iter().find(|h| h.model_tag != model_tag) {
        warnings.push(format!(
            "mixed model tags: {:?} and {:?} (record {})",
            model_tag, h.model_tag, h.record_id
        ));
    }

    Ok(Manifest {
        root,
        entries,
        dims: dims.map(|(d, _)| d),
        model_tag,
        warnings,
    })
}

fn scan_directory(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut files = Vec::new();
    for item in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let item = item.map_err(|e| Error::io(dir, e))?;
        let p = item.path();
        if p.is_file() && p.extension().is_some_and(|x| x == RECORD_EXTENSION) {
            files.push(p);
        }
    }
    files.sort();
    files
        .par_iter()
        .map(|p| {
            let h = read_record_header(p)?;
            Ok(ManifestEntry {
                record_id: h.record_id,
                problem_id: h.problem_id,
                label: h.label,
                answer: h.answer,
                path: PathBuf::from(p.file_name().unwrap()),
                truncated: false,
            })
        })
        .collect()
}

fn parse_manifest_file(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text).map_err(|(line, message)| Error::ManifestParse {
        path: path.to_path_buf(),
        line,
        message,
    })
}

/// Parses manifest text; errors carry the 1-based line number.
pub fn parse_manifest(text: &str) -> std::result::Result<Vec<ManifestEntry>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(unescape).collect::<std::result::Result<_, _>>()
            .map_err(|m| (lineno, m))?;
        if !(5..=6).contains(&fields.len()) {
            return Err((lineno, format!("expected 5 or 6 fields, found {}", fields.len())));
        }
        let label = fields[2].parse::<Label>().map_err(|e| (lineno, e.to_string()))?;
        let truncated = match fields.get(5).map(String::as_str) {
            None | Some("") => false,
            Some(TRUNCATED_FLAG) => true,
            Some(other) => return Err((lineno, format!("unknown flag {other:?}"))),
        };
        if fields[0].is_empty() {
            return Err((lineno, "empty record_id".into()));
        }
        out.push(ManifestEntry {
            record_id: fields[0].clone(),
            problem_id: fields[1].clone(),
            label,
            answer: fields[3].clone(),
            path: PathBuf::from(&fields[4]),
            truncated,
        });
    }
    Ok(out)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::from(HEADER_LINE);
    out.push('\n');
    for e in entries {
        let fields = [
            escape(&e.record_id),
            escape(&e.problem_id),
            e.label.as_str().to_string(),
            escape(&e.answer),
            escape(&e.path.to_string_lossy()),
        ];
        out.push_str(&fields.join("\t"));
        if e.truncated {
            out.push('\t');
            out.push_str(TRUNCATED_FLAG);
        }
        out.push('\n');
    }
    out
}

/// Writes `manifest.tsv` into `dir`, sorted by record id.
pub fn write_manifest(entries: &[ManifestEntry], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let mut sorted = entries.to_vec();
    sorted.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    let path = dir.as_ref().join(MANIFEST_FILE);
    codec::write_atomic(&path, format_manifest(&sorted).as_bytes())?;
    Ok(path)
}

/// Groups entries by problem id, preserving record-id order within groups.
pub fn group_by_problem(entries: &[ManifestEntry]) -> BTreeMap<&str, Vec<&ManifestEntry>> {
    let mut groups: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in entries {
        groups.entry(e.problem_id.as_str()).or_default().push(e);
    }
    groups
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, answer: &str) -> ManifestEntry {
        ManifestEntry {
            record_id: id.into(),
            problem_id: "p".into(),
            label: Label::Success,
            answer: answer.into(),
            path: PathBuf::from(format!("{id}.traj")),
            truncated: false,
        }
    }

    #[test]
    fn text_round_trip_with_escapes() {
        let mut e = entry("a", "x\ty\\z\nw");
        e.truncated = true;
        let entries = vec![e, entry("b", "")];
        assert_eq!(parse_manifest(&format_manifest(&entries)).unwrap(), entries);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_manifest("#c\na\tp\tsuccess\t1\n").unwrap_err();
        assert_eq!(err.0, 2);
        let err = parse_manifest("a\tp\tmaybe\t1\tf\n").unwrap_err();
        assert!(err.1.contains("maybe"));
        let err = parse_manifest("a\tp\tsuccess\t1\tf\tweird\n").unwrap_err();
        assert!(err.1.contains("weird"));
    }
}
