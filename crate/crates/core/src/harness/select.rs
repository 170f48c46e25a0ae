//! The "min-PD within top-K Dice" checkpoint selection rule.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, HarnessResult};
use crate::error::{Error, Result};

pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub checkpoint_id: String,
    pub mean_dice: f64,
    pub mean_pd: f64,
}

impl CheckpointEntry {
    pub fn new(id: impl Into<String>, mean_dice: f64, mean_pd: f64) -> Self {
        Self {
            checkpoint_id: id.into(),
            mean_dice,
            mean_pd,
        }
    }
}

/// Keeps the `k` entries with highest Dice (cutoff ties: lower PD, then id),
/// and returns the one among them with the lowest PD (ties: higher Dice, then
/// id). The result does not depend on input order.
pub fn select_checkpoint(entries: &[CheckpointEntry], k: usize) -> Result<&CheckpointEntry> {
    if entries.is_empty() {
        return Err(Error::Empty("checkpoint log"));
    }
    if k == 0 {
        return Err(Error::param("k", "must be >= 1"));
    }
    let mut seen = HashSet::new();
    for e in entries {
        if !(e.mean_dice.is_finite() && e.mean_pd.is_finite()) {
            return Err(Error::NonFinite("checkpoint metrics"));
        }
        if !seen.insert(e.checkpoint_id.as_str()) {
            return Err(Error::DuplicateId(e.checkpoint_id.clone()));
        }
    }
    let mut ranked: Vec<&CheckpointEntry> = entries.iter().collect();
    ranked.sort_by(|a, b| {
        b.mean_dice
            .total_cmp(&a.mean_dice)
            .then(a.mean_pd.total_cmp(&b.mean_pd))
            .then_with(|| a.checkpoint_id.cmp(&b.checkpoint_id))
    });
    ranked.truncate(k);
    Ok(ranked
        .into_iter()
        .min_by(|a, b| {
            a.mean_pd
                .total_cmp(&b.mean_pd)
                .then(b.mean_dice.total_cmp(&a.mean_dice))
                .then_with(|| a.checkpoint_id.cmp(&b.checkpoint_id))
        })
        .expect("k >= 1 and entries non-empty"))
}

/// Reads a CSV log with header `checkpoint_id,mean_dice,mean_pd`.
pub fn read_checkpoint_log(path: impl AsRef<Path>) -> HarnessResult<Vec<CheckpointEntry>> {
    let path = path.as_ref();
    let csv_err = |reason: String| HarnessError::Csv {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => HarnessError::io(path, io),
            other => csv_err(format!("{other:?}")),
        })?;
    let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?;
    if headers != vec!["checkpoint_id", "mean_dice", "mean_pd"] {
        return Err(csv_err(format!(
            "expected header `checkpoint_id,mean_dice,mean_pd`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let entries: Vec<CheckpointEntry> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_err(e.to_string()))?;
    if entries.is_empty() {
        return Err(Error::Empty("checkpoint log").into());
    }
    let mut seen = HashSet::new();
    for e in &entries {
        if !seen.insert(e.checkpoint_id.as_str()) {
            return Err(Error::DuplicateId(e.checkpoint_id.clone()).into());
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Vec<CheckpointEntry> {
        vec![
            CheckpointEntry::new("A", 0.50, 0.30),
            CheckpointEntry::new("B", 0.52, 0.28),
            CheckpointEntry::new("C", 0.51, 0.25),
        ]
    }

    #[test]
    fn worked_example() {
        assert_eq!(select_checkpoint(&abc(), 2).unwrap().checkpoint_id, "C");
    }

    #[test]
    fn single_entry() {
        let one = vec![CheckpointEntry::new("only", 0.1, 9.0)];
        for k in [1, 2, 100] {
            assert_eq!(select_checkpoint(&one, k).unwrap().checkpoint_id, "only");
        }
    }

    #[test]
    fn pd_tie_prefers_higher_dice() {
        let e = vec![
            CheckpointEntry::new("B", 0.52, 0.25),
            CheckpointEntry::new("C", 0.51, 0.25),
        ];
        assert_eq!(select_checkpoint(&e, 2).unwrap().checkpoint_id, "B");
    }

    #[test]
    fn cutoff_tie_prefers_lower_pd() {
        let e = vec![
            CheckpointEntry::new("top", 0.9, 0.9),
            CheckpointEntry::new("x", 0.5, 0.4),
            CheckpointEntry::new("y", 0.5, 0.3),
        ];
        // k = 2 keeps `top` and `y` (same Dice as `x`, lower PD).
        assert_eq!(select_checkpoint(&e, 2).unwrap().checkpoint_id, "y");
    }

    #[test]
    fn degenerate_k() {
        assert_eq!(select_checkpoint(&abc(), 1).unwrap().checkpoint_id, "B");
        assert_eq!(select_checkpoint(&abc(), 10).unwrap().checkpoint_id, "C");
        assert!(select_checkpoint(&abc(), 0).is_err());
    }

    #[test]
    fn invalid_logs() {
        assert_eq!(
            select_checkpoint(&[], 3),
            Err(Error::Empty("checkpoint log"))
        );
        let dup = vec![
            CheckpointEntry::new("A", 0.1, 0.1),
            CheckpointEntry::new("A", 0.2, 0.2),
        ];
        assert_eq!(
            select_checkpoint(&dup, 3),
            Err(Error::DuplicateId("A".into()))
        );
    }
}
