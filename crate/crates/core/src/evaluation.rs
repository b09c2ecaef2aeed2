//! Accuracy@k over evaluation sets, micro-averaged per position, plus
//! cross-fit aggregation and plot-ready CSV output.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::event_log::{EncodedTrace, PAD, SOS};
use crate::model::{forward, ModelParams};
use crate::neural::softmax_rows;
use crate::tensor::Scalar;

/// Anything that can score next-token candidates at every position of a
/// sequence. `position_scores(inputs)[i][t]` ranks token `t` as the successor
/// of `inputs[0..=i]`; only the ordering matters.
pub trait SequenceScorer {
    fn vocab_size(&self) -> usize;
    fn position_scores(&self, inputs: &[usize]) -> Result<Vec<Vec<f64>>>;
}

impl<T: Scalar> SequenceScorer for ModelParams<T> {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    /// One causal forward gives the distribution at every prefix length at
    /// once; row i equals what `predict_topk` sees after `inputs[0..=i]`.
    fn position_scores(&self, inputs: &[usize]) -> Result<Vec<Vec<f64>>> {
        let logits = forward(self, inputs)?;
        let probs = softmax_rows(&logits);
        Ok((0..probs.rows())
            .map(|i| probs.row(i).iter().map(|p| p.to_f64()).collect())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// k → micro-averaged accuracy over all valid positions.
    pub per_k: BTreeMap<usize, f64>,
    pub valid_positions: usize,
    /// prefix length (tokens of context, SOS included) → accuracy@1.
    pub per_prefix_acc1: BTreeMap<usize, f64>,
}

/// Rank of `target` among rankable candidates (PAD and SOS are never valid
/// next activities and are excluded; EOS competes). Ties resolve in favor of
/// the lower token id, matching `predict_topk`.
fn rank_of(scores: &[f64], target: usize) -> usize {
    let target_score = scores[target];
    let mut rank = 0;
    for (id, &s) in scores.iter().enumerate() {
        if id == PAD || id == SOS || id == target {
            continue;
        }
        if s > target_score || (s == target_score && id < target) {
            rank += 1;
        }
    }
    rank
}

/// Micro-averaged accuracy@k: a position counts as a hit when its true next
/// token sits within the k best-ranked candidates. The positions scored are
/// exactly the positions that contribute to the training loss (every non-PAD
/// target; SOS is never a target, EOS is kept).
pub fn accuracy_at_k(
    scorer: &impl SequenceScorer,
    dataset: &[EncodedTrace],
    ks: &[usize],
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Param("accuracy needs ks ≥ 1".into()));
    }

    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut valid = 0usize;
    let mut prefix_hits: BTreeMap<usize, (usize, usize)> = BTreeMap::new();

    for trace in dataset {
        let end = trace.true_length - 1;
        let inputs = &trace.ids[..end];
        let targets = &trace.ids[1..=end];
        let scores = scorer.position_scores(inputs)?;
        for (i, &target) in targets.iter().enumerate() {
            debug_assert_ne!(target, PAD);
            valid += 1;
            let rank = rank_of(&scores[i], target);
            for (&k, hit_count) in hits.iter_mut() {
                if rank < k {
                    *hit_count += 1;
                }
            }
            let slot = prefix_hits.entry(i + 1).or_insert((0, 0));
            slot.1 += 1;
            if rank == 0 {
                slot.0 += 1;
            }
        }
    }

    Ok(EvalReport {
        per_k: hits
            .into_iter()
            .map(|(k, h)| (k, h as f64 / valid as f64))
            .collect(),
        valid_positions: valid,
        per_prefix_acc1: prefix_hits
            .into_iter()
            .map(|(len, (h, n))| (len, h as f64 / n as f64))
            .collect(),
    })
}

/// Population mean/std of accuracy@k across fit reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: BTreeMap<usize, f64>,
    pub std: BTreeMap<usize, f64>,
    pub runs: usize,
}

pub fn aggregate_runs(reports: &[EvalReport]) -> Result<Aggregate> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Param("aggregate_runs needs ≥ 1 report".into()))?;
    let ks: Vec<usize> = first.per_k.keys().copied().collect();
    for report in reports {
        if report.per_k.keys().copied().collect::<Vec<_>>() != ks {
            return Err(Error::Param("reports have mismatched k sets".into()));
        }
    }
    let n = reports.len() as f64;
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for &k in &ks {
        let m = reports.iter().map(|r| r.per_k[&k]).sum::<f64>() / n;
        let var = reports
            .iter()
            .map(|r| {
                let d = r.per_k[&k] - m;
                d * d
            })
            .sum::<f64>()
            / n;
        mean.insert(k, m);
        std.insert(k, var.sqrt());
    }
    Ok(Aggregate {
        mean,
        std,
        runs: reports.len(),
    })
}

/// One aggregated result line (a positional-encoding method at one model
/// size).
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: String,
    pub model_size: usize,
    pub aggregate: Aggregate,
}

/// Long-form CSV: method,model_size,k,mean,std — one row per k.
pub fn write_results_csv(results: &[MethodResult], writer: &mut impl Write) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer.write_record(["method", "model_size", "k", "mean", "std"])?;
    for result in results {
        for (&k, &mean) in &result.aggregate.mean {
            csv_writer.write_record([
                result.method.clone(),
                result.model_size.to_string(),
                k.to_string(),
                format!("{mean:.6}"),
                format!("{:.6}", result.aggregate.std[&k]),
            ])?;
        }
    }
    csv_writer.flush()?;
    Ok(())
}

/// Wide-form CSV mirroring the results-table layout: one row per method and
/// size, `mean±std` per k.
pub fn write_summary_table_csv(results: &[MethodResult], writer: &mut impl Write) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    let ks: Vec<usize> = results
        .first()
        .map(|r| r.aggregate.mean.keys().copied().collect())
        .unwrap_or_default();
    let mut header = vec!["method".to_string(), "model_size".to_string()];
    header.extend(ks.iter().map(|k| format!("acc@{k}")));
    csv_writer.write_record(&header)?;
    for result in results {
        let mut record = vec![result.method.clone(), result.model_size.to_string()];
        for &k in &ks {
            record.push(format!(
                "{:.1}±{:.1}",
                100.0 * result.aggregate.mean[&k],
                100.0 * result.aggregate.std[&k]
            ));
        }
        csv_writer.write_record(&record)?;
    }
    csv_writer.flush()?;
    Ok(())
}
