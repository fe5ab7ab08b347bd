use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{Binary, Clarity, LabelClass, PromiseRecord, Subtask, Timing};
use crate::error::{Error, Result};
use crate::inference::Prediction;

use super::metrics::{confusion_matrix, f1_score, Averaging};

pub const SUBMISSION_HEADER: [&str; 5] = [
    "id",
    "promise_status",
    "evidence_status",
    "evidence_quality",
    "verification_timeline",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubmissionRow {
    pub id: String,
    pub promise_status: Binary,
    pub evidence_status: Binary,
    pub clarity: Clarity,
    pub timing: Timing,
}

impl SubmissionRow {
    pub fn class_of(&self, subtask: Subtask) -> usize {
        match subtask {
            Subtask::Promise => self.promise_status.index(),
            Subtask::Evidence => self.evidence_status.index(),
            Subtask::Clarity => self.clarity.index(),
            Subtask::Timing => self.timing.index(),
        }
    }
}

/// Values written for downstream fields when no promise is predicted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Placeholders {
    pub evidence: Binary,
    pub clarity: Clarity,
    pub timing: Timing,
}

impl Default for Placeholders {
    fn default() -> Self {
        Self {
            evidence: Binary::No,
            clarity: Clarity::NotClear,
            timing: Timing::Other,
        }
    }
}

fn class<C: LabelClass>(p: &Prediction, subtask: Subtask) -> Option<C> {
    C::from_index(p.task(subtask)?.class_index)
}

/// Takes subtasks 1 and 2 from `pred_12` and 3 and 4 from `pred_34` (which may be
/// split across several prediction sets for the same ids), in record
/// order. Rows predicted as non-promises get the placeholder values.
pub fn assemble_submission(
    pred_12: &[Prediction],
    pred_34: &[Prediction],
    records: &[PromiseRecord],
    placeholders: &Placeholders,
) -> Result<Vec<SubmissionRow>> {
    let mut combined: HashMap<&str, (Binary, Binary)> = HashMap::new();
    for p in pred_12 {
        if let (Some(promise), Some(evidence)) = (class(p, Subtask::Promise), class(p, Subtask::Evidence)) {
            combined.insert(&p.id, (promise, evidence));
        }
    }
    let mut feature: HashMap<&str, (Option<Clarity>, Option<Timing>)> = HashMap::new();
    for p in pred_34 {
        let slot = feature.entry(&p.id).or_default();
        if let Some(c) = class(p, Subtask::Clarity) {
            slot.0 = Some(c);
        }
        if let Some(t) = class(p, Subtask::Timing) {
            slot.1 = Some(t);
        }
    }

    let universe: BTreeSet<&str> = records
        .iter()
        .map(|r| r.id.as_str())
        .chain(pred_12.iter().map(|p| p.id.as_str()))
        .chain(pred_34.iter().map(|p| p.id.as_str()))
        .collect();
    let missing_combined: Vec<String> = universe
        .iter()
        .filter(|id| !combined.contains_key(*id))
        .map(|s| s.to_string())
        .collect();
    let missing_feature: Vec<String> = universe
        .iter()
        .filter(|id| !matches!(feature.get(*id), Some((Some(_), Some(_)))))
        .map(|s| s.to_string())
        .collect();
    if !missing_combined.is_empty() || !missing_feature.is_empty() {
        return Err(Error::MissingPredictions {
            missing_combined,
            missing_feature,
        });
    }

    Ok(records
        .iter()
        .map(|r| {
            let (promise, evidence) = combined[r.id.as_str()];
            let (clarity, timing) = feature[r.id.as_str()];
            if promise == Binary::No {
                SubmissionRow {
                    id: r.id.clone(),
                    promise_status: promise,
                    evidence_status: placeholders.evidence,
                    clarity: placeholders.clarity,
                    timing: placeholders.timing,
                }
            } else {
                SubmissionRow {
                    id: r.id.clone(),
                    promise_status: promise,
                    evidence_status: evidence,
                    clarity: clarity.expect("checked"),
                    timing: timing.expect("checked"),
                }
            }
        })
        .collect())
}

/// Writes the submission CSV (UTF-8, LF line endings).
pub fn write_submission<W: Write>(writer: W, rows: &[SubmissionRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(SUBMISSION_HEADER)?;
    for r in rows {
        w.write_record([
            r.id.as_str(),
            r.promise_status.name(),
            r.evidence_status.name(),
            r.clarity.name(),
            r.timing.name(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_submission<R: Read>(reader: R) -> Result<Vec<SubmissionRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != SUBMISSION_HEADER {
        return Err(Error::Parse {
            row: 0,
            field: "header".into(),
            message: format!("expected `{}`", SUBMISSION_HEADER.join(",")),
        });
    }
    fn field<C: LabelClass>(rec: &csv::StringRecord, row: usize, i: usize) -> Result<C> {
        C::parse(&rec[i]).ok_or_else(|| Error::Parse {
            row,
            field: SUBMISSION_HEADER[i].into(),
            message: format!("unknown label `{}`", &rec[i]),
        })
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        rows.push(SubmissionRow {
            id: rec[0].to_string(),
            promise_status: field(&rec, row, 1)?,
            evidence_status: field(&rec, row, 2)?,
            clarity: field(&rec, row, 3)?,
            timing: field(&rec, row, 4)?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubtaskReport {
    pub subtask: Subtask,
    pub averaging: Averaging,
    pub f1: f64,
    /// Records with a gold label for this subtask.
    pub support: usize,
    /// `confusion[gold][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub subtasks: Vec<SubtaskReport>,
    /// Unweighted mean of the per-subtask F1 values.
    pub mean_f1: f64,
}

impl MetricReport {
    pub fn f1(&self, subtask: Subtask) -> Option<f64> {
        self.subtasks.iter().find(|s| s.subtask == subtask).map(|s| s.f1)
    }

    pub fn summary(&self) -> BTreeMap<String, f64> {
        let mut out: BTreeMap<String, f64> = self
            .subtasks
            .iter()
            .map(|s| (format!("{}_f1", s.subtask.key()), s.f1))
            .collect();
        out.insert("mean_f1".into(), self.mean_f1);
        out
    }
}

/// Scores a submission against labelled records. Each subtask is scored
/// on the records that carry a gold label for it; subtasks without any
/// gold labels are left out of the mean.
pub fn evaluate(submission: &[SubmissionRow], gold: &[PromiseRecord]) -> Result<MetricReport> {
    let mut by_id: HashMap<&str, &SubmissionRow> = HashMap::new();
    for row in submission {
        if by_id.insert(&row.id, row).is_some() {
            return Err(Error::Alignment(format!("duplicate submission id `{}`", row.id)));
        }
    }
    let gold_ids: BTreeSet<&str> = gold.iter().map(|r| r.id.as_str()).collect();
    let unknown: Vec<&str> = submission
        .iter()
        .map(|r| r.id.as_str())
        .filter(|id| !gold_ids.contains(id))
        .collect();
    let missing: Vec<&str> = gold
        .iter()
        .filter(|r| r.labels.is_some() && !by_id.contains_key(r.id.as_str()))
        .map(|r| r.id.as_str())
        .collect();
    if !unknown.is_empty() || !missing.is_empty() {
        return Err(Error::Alignment(format!(
            "{} submission ids not in gold {:?}, {} gold ids without a row {:?}",
            unknown.len(),
            &unknown[..unknown.len().min(5)],
            missing.len(),
            &missing[..missing.len().min(5)]
        )));
    }

    let mut reports = Vec::new();
    for subtask in [Subtask::Promise, Subtask::Evidence, Subtask::Clarity, Subtask::Timing] {
        let (pred, truth): (Vec<usize>, Vec<usize>) = gold
            .iter()
            .filter_map(|r| {
                let g = r.class_of(subtask)?;
                Some((by_id[r.id.as_str()].class_of(subtask), g))
            })
            .unzip();
        if truth.is_empty() {
            continue;
        }
        let averaging = Averaging::for_subtask(subtask);
        reports.push(SubtaskReport {
            subtask,
            averaging,
            f1: f1_score(&pred, &truth, averaging)?,
            support: truth.len(),
            confusion: confusion_matrix(&pred, &truth, subtask.n_classes())?,
        });
    }
    if reports.is_empty() {
        return Err(Error::Alignment("gold corpus has no labels".into()));
    }
    let mean_f1 = reports.iter().map(|r| r.f1).sum::<f64>() / reports.len() as f64;
    Ok(MetricReport {
        subtasks: reports,
        mean_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelSet;
    use crate::inference::TaskPrediction;

    fn pred(id: &str, tasks: &[(Subtask, usize)]) -> Prediction {
        Prediction {
            id: id.into(),
            tasks: tasks
                .iter()
                .map(|&(t, c)| {
                    (
                        t,
                        TaskPrediction {
                            label: t.class_names()[c].into(),
                            class_index: c,
                            probability: 1.0,
                            class_probabilities: vec![],
                            per_pass: vec![1.0],
                        },
                    )
                })
                .collect(),
        }
    }

    fn record(id: &str, labels: LabelSet) -> PromiseRecord {
        PromiseRecord::new(id, "text").with_labels(labels)
    }

    #[test]
    fn merges_and_repairs() {
        let records = vec![PromiseRecord::new("a", "x"), PromiseRecord::new("b", "y")];
        let p12 = vec![
            pred("a", &[(Subtask::Promise, 1), (Subtask::Evidence, 1)]),
            pred("b", &[(Subtask::Promise, 0), (Subtask::Evidence, 1)]),
        ];
        let p34 = vec![
            pred("a", &[(Subtask::Clarity, 0)]),
            pred("a", &[(Subtask::Timing, 0)]),
            pred("b", &[(Subtask::Clarity, 0), (Subtask::Timing, 0)]),
        ];
        let rows = assemble_submission(&p12, &p34, &records, &Placeholders::default()).unwrap();
        assert_eq!(
            rows[0],
            SubmissionRow {
                id: "a".into(),
                promise_status: Binary::Yes,
                evidence_status: Binary::Yes,
                clarity: Clarity::Clear,
                timing: Timing::Within2Years,
            }
        );
        assert_eq!(rows[1].evidence_status, Binary::No);
        assert_eq!(rows[1].clarity, Clarity::NotClear);
        assert_eq!(rows[1].timing, Timing::Other);
    }

    #[test]
    fn reports_symmetric_difference() {
        let records = vec![PromiseRecord::new("a", "x")];
        let p12 = vec![pred("a", &[(Subtask::Promise, 1), (Subtask::Evidence, 1)])];
        let p34 = vec![pred("z", &[(Subtask::Clarity, 0), (Subtask::Timing, 0)])];
        match assemble_submission(&p12, &p34, &records, &Placeholders::default()) {
            Err(Error::MissingPredictions {
                missing_combined,
                missing_feature,
            }) => {
                assert_eq!(missing_combined, vec!["z"]);
                assert_eq!(missing_feature, vec!["a"]);
            }
            other => panic!("{other:?}"),
        }
    }

    fn gold() -> Vec<PromiseRecord> {
        vec![
            record(
                "a",
                LabelSet {
                    promise_status: Binary::Yes,
                    evidence_status: Some(Binary::Yes),
                    clarity: Some(Clarity::Clear),
                    timing: Some(Timing::Within2Years),
                },
            ),
            record(
                "b",
                LabelSet {
                    promise_status: Binary::No,
                    evidence_status: None,
                    clarity: None,
                    timing: None,
                },
            ),
        ]
    }

    fn perfect() -> Vec<SubmissionRow> {
        vec![
            SubmissionRow {
                id: "a".into(),
                promise_status: Binary::Yes,
                evidence_status: Binary::Yes,
                clarity: Clarity::Clear,
                timing: Timing::Within2Years,
            },
            SubmissionRow {
                id: "b".into(),
                promise_status: Binary::No,
                evidence_status: Binary::No,
                clarity: Clarity::NotClear,
                timing: Timing::Other,
            },
        ]
    }

    #[test]
    fn perfect_and_quarter_scores() {
        let report = evaluate(&perfect(), &gold()).unwrap();
        assert_eq!(report.mean_f1, 1.0);
        assert_eq!(report.subtasks.len(), 4);

        let mut rows = perfect();
        rows[0].evidence_status = Binary::No;
        rows[0].clarity = Clarity::Misleading;
        rows[0].timing = Timing::Other;
        let report = evaluate(&rows, &gold()).unwrap();
        assert_eq!(report.f1(Subtask::Promise), Some(1.0));
        assert_eq!(report.mean_f1, 0.25);
    }

    #[test]
    fn csv_round_trip_and_alignment() {
        let mut buf = Vec::new();
        write_submission(&mut buf, &perfect()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,promise_status,evidence_status,evidence_quality,verification_timeline\n"));
        assert!(!text.contains('\r'));
        assert_eq!(read_submission(&buf[..]).unwrap(), perfect());
        assert!(matches!(evaluate(&perfect()[..1], &gold()), Err(Error::Alignment(_))));
    }
}
