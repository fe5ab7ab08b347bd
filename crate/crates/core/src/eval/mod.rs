//! Metrics, submission assembly and local evaluation.

mod metrics;
mod submission;

pub use metrics::{confusion_matrix, f1_score, Averaging};
pub use submission::{
    assemble_submission, evaluate, read_submission, write_submission, MetricReport, Placeholders,
    SubmissionRow, SubtaskReport, SUBMISSION_HEADER,
};
