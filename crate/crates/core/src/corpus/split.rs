//! Stratified k-fold and holdout splits with largest-remainder allocation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Binary, PromiseRecord, Subtask};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;

/// Which label defines the strata.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSelector {
    Subtask(Subtask),
    /// Joint promise/evidence stratum: No, Yes without evidence label,
    /// Yes/No, Yes/Yes.
    PromiseEvidence,
}

impl LabelSelector {
    fn stratum(self, record: &PromiseRecord) -> Result<(usize, String)> {
        let missing = |subtask: Subtask| Error::MissingLabel {
            id: record.id.clone(),
            subtask: subtask.to_string(),
        };
        match self {
            LabelSelector::Subtask(s) => {
                let class = record.class_of(s).ok_or_else(|| missing(s))?;
                Ok((class, s.class_names()[class].to_string()))
            }
            LabelSelector::PromiseEvidence => {
                let labels = record
                    .labels
                    .as_ref()
                    .ok_or_else(|| missing(Subtask::Promise))?;
                Ok(match (labels.promise_status, labels.evidence_status) {
                    (Binary::No, _) => (0, "promise=No".into()),
                    (Binary::Yes, None) => (1, "promise=Yes,evidence=?".into()),
                    (Binary::Yes, Some(Binary::No)) => (2, "promise=Yes,evidence=No".into()),
                    (Binary::Yes, Some(Binary::Yes)) => (3, "promise=Yes,evidence=Yes".into()),
                })
            }
        }
    }
}

impl From<Subtask> for LabelSelector {
    fn from(s: Subtask) -> Self {
        LabelSelector::Subtask(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
}

/// JSON form of a set of folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub k: usize,
    pub folds: Vec<ManifestFold>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFold {
    pub fold: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

impl SplitManifest {
    pub fn new(seed: u64, folds: &[FoldSplit]) -> Self {
        Self {
            seed,
            k: folds.len(),
            folds: folds
                .iter()
                .map(|f| ManifestFold {
                    fold: f.fold_index,
                    train: f.train_ids.clone(),
                    val: f.validation_ids.clone(),
                })
                .collect(),
        }
    }
}

struct Stratum {
    name: String,
    /// Indices into the record slice, shuffled.
    members: Vec<usize>,
}

/// Groups records by class index (ascending), each group ordered by id and
/// then shuffled with a generator seeded per class.
fn strata(records: &[PromiseRecord], selector: LabelSelector, seed: u64) -> Result<Vec<Stratum>> {
    let mut groups: Vec<Option<Stratum>> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let (class, name) = selector.stratum(r)?;
        if groups.len() <= class {
            groups.resize_with(class + 1, || None);
        }
        groups[class]
            .get_or_insert_with(|| Stratum {
                name,
                members: Vec::new(),
            })
            .members
            .push(i);
    }
    let mut out: Vec<Stratum> = groups.into_iter().flatten().collect();
    for (c, s) in out.iter_mut().enumerate() {
        s.members.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c as u64));
        s.members.shuffle(&mut rng);
    }
    Ok(out)
}

fn ids_in_corpus_order(records: &[PromiseRecord], mut idx: Vec<usize>) -> Vec<String> {
    idx.sort_unstable();
    idx.into_iter().map(|i| records[i].id.clone()).collect()
}

/// Stratified k-fold partition. Each class is dealt into folds in
/// near-equal chunks; the leftover members of successive classes continue
/// round-robin from where the previous class stopped, so fold sizes also
/// differ by at most one.
pub fn stratified_kfold(
    records: &[PromiseRecord],
    k: usize,
    selector: impl Into<LabelSelector>,
    seed: u64,
) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let strata = strata(records, selector.into(), seed)?;
    if let Some(s) = strata.iter().find(|s| s.members.len() < k) {
        return Err(Error::InsufficientClass {
            class: s.name.clone(),
            count: s.members.len(),
            required: k,
        });
    }

    let mut fold_of = vec![0usize; records.len()];
    let mut next_extra = 0usize;
    for s in &strata {
        let n = s.members.len();
        let base = n / k;
        let extra = n % k;
        let mut sizes = vec![base; k];
        for j in 0..extra {
            sizes[(next_extra + j) % k] += 1;
        }
        next_extra = (next_extra + extra) % k;
        let mut it = s.members.iter();
        for (fold, &size) in sizes.iter().enumerate() {
            for &m in it.by_ref().take(size) {
                fold_of[m] = fold;
            }
        }
    }

    Ok((0..k)
        .map(|fold| {
            let (val, train): (Vec<usize>, Vec<usize>) =
                (0..records.len()).partition(|&i| fold_of[i] == fold);
            FoldSplit {
                fold_index: fold,
                train_ids: ids_in_corpus_order(records, train),
                validation_ids: ids_in_corpus_order(records, val),
            }
        })
        .collect())
}

/// Largest-remainder apportionment of `total` seats by `quotas`; ties go to
/// the earlier entry.
pub(crate) fn largest_remainder(quotas: &[f64], total: usize) -> Vec<usize> {
    // Snap quotas that are integers up to rounding noise (e.g. 100 * (1 - 0.9)).
    let snapped: Vec<f64> = quotas.iter().map(|q| (q * 1e9).round() / 1e9).collect();
    let mut seats: Vec<usize> = snapped.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = seats.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = snapped[a] - snapped[a].floor();
        let rb = snapped[b] - snapped[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        seats[i] += 1;
    }
    seats
}

/// Stratified train/validation split. The validation size is
/// `round(n * (1 - train_fraction))`, apportioned across classes by
/// largest remainder.
pub fn holdout_split(
    records: &[PromiseRecord],
    train_fraction: f64,
    selector: impl Into<LabelSelector>,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let strata = strata(records, selector.into(), seed)?;
    if strata.len() < 2 {
        return Err(Error::SingleClass(strata.len()));
    }
    let val_fraction = 1.0 - train_fraction;
    let total = ((records.len() as f64 * val_fraction * 1e9).round() / 1e9).round() as usize;
    // Proportional shares of the rounded total, so quotas sum to it exactly.
    let quotas: Vec<f64> = strata
        .iter()
        .map(|s| s.members.len() as f64 * total as f64 / records.len() as f64)
        .collect();
    let seats = largest_remainder(&quotas, total);

    let mut val = Vec::new();
    let mut train = Vec::new();
    for (s, &n_val) in strata.iter().zip(&seats) {
        val.extend_from_slice(&s.members[..n_val.min(s.members.len())]);
        train.extend_from_slice(&s.members[n_val.min(s.members.len())..]);
    }
    Ok((
        ids_in_corpus_order(records, train),
        ids_in_corpus_order(records, val),
    ))
}
