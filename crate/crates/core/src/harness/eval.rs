//! Batch evaluation over directories of predictions and ground truths.
//!
//! Samples are paired by file stem. Ground truths are PGM masks (`.pgm`);
//! predictions are `PMAP1` maps (`.pmap`, preferred) or PGM masks. Each sample
//! is evaluated independently on a bounded worker pool and the records are
//! emitted in sorted sample-id order, so output bytes do not depend on the
//! worker count.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::codec::{read_mask, read_prediction};
use super::config::HarnessConfig;
use super::{HarnessError, HarnessResult};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{BinaryMask, ProbMap};
use crate::metrics::{evaluate_sample, EvalConfig, MetricsRecord};
use crate::persistence::DiagramDistanceConfig;

pub const CSV_HEADER: [&str; 7] = [
    "sample_id",
    "dice",
    "iou",
    "bf1",
    "d_beta0",
    "d_beta1",
    "pd_dist",
];

/// Sample ids of the two summary rows appended after the per-sample rows.
pub const MEAN_ROW: &str = "#mean";
pub const MEDIAN_ROW: &str = "#median";

/// Evaluates in-memory samples; results keep the input order.
pub fn evaluate_batch(
    samples: &[(String, ProbMap, BinaryMask)],
    cfg: &EvalConfig,
    exec: Exec,
) -> Vec<Result<MetricsRecord>> {
    exec.map_range(samples.len(), |i| {
        let (id, pred, gt) = &samples[i];
        evaluate_sample(id, pred, gt, cfg)
    })
}

/// Runs `f` on a pool of `workers` threads (sequentially when `workers <= 1`
/// or the `parallel` feature is off).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce(Exec) -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("failed to start worker pool");
        return pool.install(|| f(Exec::Parallel));
    }
    let _ = workers;
    f(Exec::Sequential)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub sample_id: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleFailure {
    pub sample_id: String,
    pub reason: String,
}

fn list_by_stem(dir: &Path, exts: &[&str]) -> HarnessResult<BTreeMap<String, PathBuf>> {
    let mut out: BTreeMap<String, PathBuf> = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        let Some(ext) = path.extension().and_then(|e| e.to_str()) else {
            continue;
        };
        let Some(rank) = exts.iter().position(|&x| x == ext) else {
            continue;
        };
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        // Earlier extensions in `exts` win when a stem has several files.
        let better = match out.get(stem) {
            None => true,
            Some(existing) => {
                let old = existing.extension().and_then(|e| e.to_str()).unwrap_or("");
                rank < exts.iter().position(|&x| x == old).unwrap_or(usize::MAX)
            }
        };
        if better {
            out.insert(stem.to_owned(), path);
        }
    }
    Ok(out)
}

/// Pairs files by stem; returns matched pairs and per-stem pairing failures,
/// both sorted by sample id.
pub fn pair_dirs(
    pred_dir: &Path,
    gt_dir: &Path,
) -> HarnessResult<(Vec<SamplePair>, Vec<SampleFailure>)> {
    let preds = list_by_stem(pred_dir, &["pmap", "pgm"])?;
    let gts = list_by_stem(gt_dir, &["pgm"])?;
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for (stem, gt) in &gts {
        match preds.get(stem) {
            Some(pred) => pairs.push(SamplePair {
                sample_id: stem.clone(),
                pred: pred.clone(),
                gt: gt.clone(),
            }),
            None => failures.push(SampleFailure {
                sample_id: stem.clone(),
                reason: format!("no prediction for ground truth {}", gt.display()),
            }),
        }
    }
    for (stem, pred) in &preds {
        if !gts.contains_key(stem) {
            failures.push(SampleFailure {
                sample_id: stem.clone(),
                reason: format!("no ground truth for prediction {}", pred.display()),
            });
        }
    }
    failures.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok((pairs, failures))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config: HarnessConfig,
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<SampleFailure>,
}

impl EvalReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> HarnessResult<()> {
        write_metrics_csv(&self.records, out)
    }

    /// One JSON object per sample, same field names as the CSV columns.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Settings that shaped the numbers, for the sidecar metadata file.
    pub fn metadata_json(&self) -> String {
        #[derive(Serialize)]
        struct Meta<'a> {
            threshold: f64,
            bf1_tolerance: usize,
            pd: &'a DiagramDistanceConfig,
            pd_homology: &'static str,
            select_k: usize,
            samples: usize,
            failures: Vec<&'a str>,
            d_beta_summary: &'static str,
        }
        let meta = Meta {
            threshold: self.config.eval.threshold,
            bf1_tolerance: self.config.eval.bf1_tolerance,
            pd: &self.config.eval.pd,
            pd_homology: "H0 superlevel, essential death 0",
            select_k: self.config.top_k,
            samples: self.records.len(),
            failures: self.failures.iter().map(|f| f.sample_id.as_str()).collect(),
            d_beta_summary: "mean/median of per-sample absolute errors",
        };
        serde_json::to_string_pretty(&meta).expect("metadata serialization cannot fail")
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Writes the header, one row per record, then the mean and median rows.
/// Floats use the shortest representation that parses back to the same bits.
pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], out: W) -> HarnessResult<()> {
    let to_err = |e: csv::Error| HarnessError::Csv {
        path: PathBuf::from("<output>"),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(to_err)?;
    for r in records {
        w.write_record([
            r.sample_id.clone(),
            r.dice.to_string(),
            r.iou.to_string(),
            r.bf1.to_string(),
            r.d_beta0.to_string(),
            r.d_beta1.to_string(),
            r.pd_dist.to_string(),
        ])
        .map_err(to_err)?;
    }
    if !records.is_empty() {
        let columns: [Vec<f64>; 6] = [
            records.iter().map(|r| r.dice).collect(),
            records.iter().map(|r| r.iou).collect(),
            records.iter().map(|r| r.bf1).collect(),
            records.iter().map(|r| r.d_beta0 as f64).collect(),
            records.iter().map(|r| r.d_beta1 as f64).collect(),
            records.iter().map(|r| r.pd_dist).collect(),
        ];
        let n = records.len() as f64;
        let mut mean_row = vec![MEAN_ROW.to_owned()];
        mean_row.extend(
            columns
                .iter()
                .map(|c| (c.iter().sum::<f64>() / n).to_string()),
        );
        let mut median_row = vec![MEDIAN_ROW.to_owned()];
        median_row.extend(columns.iter().map(|c| median(c.clone()).to_string()));
        w.write_record(&mean_row).map_err(to_err)?;
        w.write_record(&median_row).map_err(to_err)?;
    }
    w.flush().map_err(|e| HarnessError::io("<output>", e))?;
    Ok(())
}

/// Pairs, reads and evaluates every sample in the two directories.
///
/// Per-sample problems (missing partner, unreadable file, shape mismatch) are
/// collected in [`EvalReport::failures`]; an empty intersection is an error.
pub fn evaluate_dirs(
    pred_dir: &Path,
    gt_dir: &Path,
    config: &HarnessConfig,
    workers: usize,
) -> HarnessResult<EvalReport> {
    config.eval.validate()?;
    let (pairs, mut failures) = pair_dirs(pred_dir, gt_dir)?;
    if pairs.is_empty() {
        return Err(Error::Empty("no prediction/ground-truth pairs share a file stem").into());
    }
    let results = with_workers(workers, |exec| {
        exec.map_range(pairs.len(), |i| {
            let pair = &pairs[i];
            let gt = read_mask(&pair.gt).map_err(|e| e.to_string())?;
            let pred = read_prediction(&pair.pred).map_err(|e| e.to_string())?;
            evaluate_sample(&pair.sample_id, &pred, &gt, &config.eval).map_err(|e| e.to_string())
        })
    });
    let mut records = Vec::with_capacity(pairs.len());
    for (pair, result) in pairs.iter().zip(results) {
        match result {
            Ok(r) => records.push(r),
            Err(reason) => failures.push(SampleFailure {
                sample_id: pair.sample_id.clone(),
                reason,
            }),
        }
    }
    failures.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(EvalReport {
        config: *config,
        records,
        failures,
    })
}
