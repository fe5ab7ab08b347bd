//! Record schema, dataset ingestion and deterministic stratified splits.

mod labels;
mod split;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use labels::{canonical_key, Binary, Clarity, LabelClass, LabelSet, Subtask, Timing};
pub use split::{
    holdout_split, stratified_kfold, FoldSplit, LabelSelector, ManifestFold, SplitManifest,
};

pub const DEFAULT_SOURCE_TAG: &str = "ESG REPORT";

/// One text instance with document metadata and optional gold labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PromiseRecord {
    pub id: String,
    pub raw_text: String,
    pub page_number: Option<u32>,
    pub source_tag: String,
    pub labels: Option<LabelSet>,
}

impl PromiseRecord {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            raw_text: raw_text.into(),
            page_number: None,
            source_tag: DEFAULT_SOURCE_TAG.to_string(),
            labels: None,
        }
    }

    pub fn with_page(mut self, page: u32) -> Self {
        self.page_number = Some(page);
        self
    }

    pub fn with_source_tag(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }

    pub fn with_labels(mut self, labels: LabelSet) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Gold class index for `subtask`, if labelled.
    pub fn class_of(&self, subtask: Subtask) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l.class_of(subtask))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SchemaMode {
    #[default]
    Strict,
    /// Accepts dependent labels on non-promise rows.
    Permissive,
}

/// On-disk row shared by the JSON-lines and CSV formats.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RecordRow {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "page_field")]
    pub page_number: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub promise_status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_quality: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification_timeline: Option<String>,
}

/// Page numbers arrive as JSON numbers, numeric strings, or blanks.
fn page_field<'de, D>(de: D) -> std::result::Result<Option<u32>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(u32),
        Text(String),
    }
    match Option::<Raw>::deserialize(de)? {
        None => Ok(None),
        Some(Raw::Num(n)) => Ok(Some(n)),
        Some(Raw::Text(s)) if s.trim().is_empty() => Ok(None),
        Some(Raw::Text(s)) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| serde::de::Error::custom(format!("invalid page number `{s}`"))),
    }
}

fn non_blank(value: &Option<String>) -> Option<&str> {
    value.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

fn parse_label<L: LabelClass>(raw: Option<&str>, row: usize, field: &str) -> Result<Option<L>> {
    raw.map(|s| {
        L::parse(s).ok_or_else(|| Error::Parse {
            row,
            field: field.to_string(),
            message: format!("unknown label `{s}`"),
        })
    })
    .transpose()
}

impl RecordRow {
    pub fn from_record(record: &PromiseRecord) -> Self {
        let labels = record.labels.as_ref();
        Self {
            id: Some(record.id.clone()),
            text: Some(record.raw_text.clone()),
            page_number: record.page_number,
            source_tag: Some(record.source_tag.clone()),
            promise_status: labels.map(|l| l.promise_status.name().to_string()),
            evidence_status: labels
                .and_then(|l| l.evidence_status)
                .map(|v| v.name().to_string()),
            evidence_quality: labels.and_then(|l| l.clarity).map(|v| v.name().to_string()),
            verification_timeline: labels.and_then(|l| l.timing).map(|v| v.name().to_string()),
        }
    }

    /// Validates the row and converts it. `row` is 1-based and used in errors.
    pub fn into_record(self, row: usize, mode: SchemaMode) -> Result<PromiseRecord> {
        let missing = |field: &str| Error::Parse {
            row,
            field: field.to_string(),
            message: "missing or empty".to_string(),
        };
        let id = non_blank(&self.id).ok_or_else(|| missing("id"))?.to_string();
        let text = self.text.clone().unwrap_or_default();
        if text.trim().is_empty() {
            return Err(missing("text"));
        }
        let promise = parse_label::<Binary>(non_blank(&self.promise_status), row, "promise_status")?;
        let evidence =
            parse_label::<Binary>(non_blank(&self.evidence_status), row, "evidence_status")?;
        let clarity =
            parse_label::<Clarity>(non_blank(&self.evidence_quality), row, "evidence_quality")?;
        let timing = parse_label::<Timing>(
            non_blank(&self.verification_timeline),
            row,
            "verification_timeline",
        )?;

        let labels = match promise {
            Some(promise_status) => Some(LabelSet {
                promise_status,
                evidence_status: evidence,
                clarity,
                timing,
            }),
            None if evidence.is_some() || clarity.is_some() || timing.is_some() => {
                return Err(missing("promise_status"));
            }
            None => None,
        };
        if let (Some(l), SchemaMode::Strict) = (&labels, mode) {
            if let Some(field) = l.dependency_violation() {
                return Err(Error::DependentLabel { id, field });
            }
        }

        Ok(PromiseRecord {
            id,
            raw_text: text,
            page_number: self.page_number,
            source_tag: non_blank(&self.source_tag)
                .unwrap_or(DEFAULT_SOURCE_TAG)
                .to_string(),
            labels,
        })
    }
}

fn check_unique(records: &[PromiseRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateId(r.id.clone()));
        }
    }
    Ok(())
}

/// Reads JSON-lines records. Blank lines are skipped; unknown fields ignored.
pub fn parse_jsonl<R: Read>(reader: R, mode: SchemaMode) -> Result<Vec<PromiseRecord>> {
    let mut records = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::Parse {
            row,
            field: "<line>".into(),
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row,
            field: "<json>".into(),
            message: e.to_string(),
        })?;
        records.push(parsed.into_record(row, mode)?);
    }
    check_unique(&records)?;
    Ok(records)
}

/// Reads CSV records, mapping columns by header name.
pub fn parse_csv<R: Read>(reader: R, mode: SchemaMode) -> Result<Vec<PromiseRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<RecordRow>().enumerate() {
        let row_no = i + 1;
        let parsed = row.map_err(|e| Error::Parse {
            row: row_no,
            field: e
                .position()
                .map(|p| format!("<line {}>", p.line()))
                .unwrap_or_else(|| "<csv>".into()),
            message: e.to_string(),
        })?;
        records.push(parsed.into_record(row_no, mode)?);
    }
    check_unique(&records)?;
    Ok(records)
}

/// Loads a corpus from `.jsonl`/`.json` or `.csv`, chosen by extension.
pub fn load_corpus(path: impl AsRef<Path>, mode: SchemaMode) -> Result<Vec<PromiseRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_csv(file, mode)
    } else {
        parse_jsonl(file, mode)
    }
}

pub fn write_jsonl<W: Write>(mut writer: W, records: &[PromiseRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, &RecordRow::from_record(r))?;
        writer.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, records: &[PromiseRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_jsonl(&mut w, records)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jsonl(s: &str, mode: SchemaMode) -> Result<Vec<PromiseRecord>> {
        parse_jsonl(s.as_bytes(), mode)
    }

    #[test]
    fn parses_labels_case_insensitively() {
        let recs = jsonl(
            r#"{"id":"a","text":"We pledge","page_number":4,"promise_status":"Yes","evidence_quality":"Not Clear"}"#,
            SchemaMode::Strict,
        )
        .unwrap();
        let labels = recs[0].labels.as_ref().unwrap();
        assert_eq!(labels.clarity, Some(Clarity::NotClear));
        assert_eq!(recs[0].page_number, Some(4));
        assert_eq!(recs[0].source_tag, DEFAULT_SOURCE_TAG);
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        assert!(jsonl("", SchemaMode::Strict).unwrap().is_empty());
        assert!(parse_csv("id,text\n".as_bytes(), SchemaMode::Strict)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn strict_mode_rejects_dependent_label_on_non_promise() {
        let line = r#"{"id":"a","text":"x","promise_status":"No","evidence_status":"Yes"}"#;
        assert!(matches!(
            jsonl(line, SchemaMode::Strict),
            Err(Error::DependentLabel { field: "evidence_status", .. })
        ));
        let recs = jsonl(line, SchemaMode::Permissive).unwrap();
        assert_eq!(recs[0].labels.as_ref().unwrap().evidence_status, Some(Binary::Yes));
    }

    #[test]
    fn malformed_rows_name_row_and_field() {
        let input = "{\"id\":\"a\",\"text\":\"ok\"}\n{\"id\":\"b\",\"text\":\"  \"}\n";
        match jsonl(input, SchemaMode::Strict) {
            Err(Error::Parse { row, field, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(field, "text");
            }
            other => panic!("unexpected {other:?}"),
        }
        match jsonl(r#"{"id":"a","text":"t","promise_status":"perhaps"}"#, SchemaMode::Strict) {
            Err(Error::Parse { row: 1, field, .. }) => assert_eq!(field, "promise_status"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            jsonl("{not json", SchemaMode::Strict),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let input = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        assert!(matches!(
            jsonl(input, SchemaMode::Strict),
            Err(Error::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn csv_maps_columns_by_header() {
        let input = "text,id,page_number,promise_status,verification_timeline\n\
                     \"We will, by 2030\",r1,12,yes,2-5 years\n\
                     Plain text,r2,,No,\n";
        let recs = parse_csv(input.as_bytes(), SchemaMode::Strict).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].raw_text, "We will, by 2030");
        assert_eq!(recs[0].page_number, Some(12));
        assert_eq!(
            recs[0].labels.as_ref().unwrap().timing,
            Some(Timing::TwoToFiveYears)
        );
        assert_eq!(recs[1].page_number, None);
        assert_eq!(recs[1].labels.as_ref().unwrap().promise_status, Binary::No);
    }

    #[test]
    fn jsonl_round_trip_omits_absent_fields() {
        let rec = PromiseRecord::new("x", "We commit").with_labels(LabelSet {
            promise_status: Binary::Yes,
            evidence_status: None,
            clarity: Some(Clarity::Misleading),
            timing: None,
        });
        let mut buf = Vec::new();
        write_jsonl(&mut buf, std::slice::from_ref(&rec)).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(!line.contains("page_number"));
        assert!(!line.contains("evidence_status"));
        assert_eq!(parse_jsonl(&buf[..], SchemaMode::Strict).unwrap(), vec![rec]);
    }
}
