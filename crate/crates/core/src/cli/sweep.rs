//! Batch-size sweep across random instances: runs every configured
//! heuristic at every batch fraction, records the mutual information
//! captured at each cardinality, and writes deterministic CSV/JSON reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cli::config::{derive_seed, ExperimentConfig, Heuristic};
use crate::error::{Error, Result};
use crate::greedy::{
    batch_greedy, distributed_batch_greedy, stochastic_batch_greedy, BatchSchedule, SelectionTrace,
    StochasticConfig,
};
use crate::oed::{
    mm_greedy_mi, mm_reverse_greedy, mutual_information, LinearGaussianModel, MiOracle,
};
use crate::setfn::{IndexSet, ValueOracle};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub instance_id: usize,
    pub heuristic: &'static str,
    pub batch_fraction: f64,
    pub q: usize,
    pub cardinality: usize,
    pub mi: f64,
    pub mi_relative: f64,
    pub evals: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct QuantileStats {
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub min: f64,
    pub max: f64,
}

pub type Summary = BTreeMap<String, BTreeMap<String, BTreeMap<String, QuantileStats>>>;

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub summary: Summary,
}

/// Mutual information of each prefix `order[..c]`, `c = 1..=limit`.
fn prefix_curve(model: &LinearGaussianModel, order: &[usize], limit: usize) -> Result<Vec<f64>> {
    let mut curve = Vec::with_capacity(limit);
    let mut prefix = IndexSet::empty();
    for &i in order.iter().take(limit) {
        prefix = prefix.with(i);
        curve.push(mutual_information(model, &prefix)?);
    }
    Ok(curve)
}

/// Cumulative counted evaluations attributed to each selected position:
/// every element of step `j` reports the total through step `j`.
fn cumulative_evals(trace: &SelectionTrace) -> Vec<u64> {
    let mut out = Vec::new();
    let mut acc = 0u64;
    for step in &trace.steps {
        acc += step.evals;
        for _ in 0..step.picked.len() {
            out.push(acc);
        }
    }
    out
}

struct RunResult {
    order: Vec<usize>,
    evals_at: Vec<u64>,
    /// Effective batch size (the distributed variant clamps it to the
    /// partition size).
    q_used: usize,
}

fn run_heuristic(
    heuristic: Heuristic,
    model: &LinearGaussianModel,
    q: usize,
    cfg: &ExperimentConfig,
    instance_seed: u64,
) -> Result<RunResult> {
    let m = model.observation_dim();
    match heuristic {
        Heuristic::StdGreedy => {
            let f = MiOracle::new(model);
            let oracle = ValueOracle::new(&f);
            let trace = batch_greedy(&oracle, &BatchSchedule::uniform(q, m)?)?;
            Ok(RunResult {
                evals_at: cumulative_evals(&trace),
                order: trace.selection_order(),
                q_used: q,
            })
        }
        Heuristic::MmGreedy => {
            let trace = mm_greedy_mi(model, &BatchSchedule::uniform(q, m)?)?;
            Ok(RunResult {
                evals_at: cumulative_evals(&trace),
                order: trace.selection_order(),
                q_used: q,
            })
        }
        Heuristic::MmReverseGreedy => {
            let trace = mm_reverse_greedy(model, &BatchSchedule::uniform(q, m)?)?;
            // Reverse the discard order: the last discarded index is the
            // most valuable, so prefixes of the reversed order are the
            // retained sets of each cardinality.
            let discard_evals = cumulative_evals(&trace);
            let discard_order = trace.selection_order();
            let order: Vec<usize> = discard_order.into_iter().rev().collect();
            // Retained cardinality c corresponds to the discard step that
            // removed down to c; position c-1 of the keep order maps to
            // discard position m-c.
            let evals_at: Vec<u64> = (1..=m)
                .map(|c| if c == m { 0 } else { discard_evals[m - c - 1] })
                .collect();
            Ok(RunResult {
                order,
                evals_at,
                q_used: q,
            })
        }
        Heuristic::Distributed => {
            // Each partition contributes about half of its candidates, so
            // the merge pass performs a genuine second-round selection; the
            // batch size is clamped to what a partition can supply.
            let parts = cfg.distributed_partitions.min(m);
            let q_used = q.min(m / (2 * parts)).max(1).min(m / parts);
            let rounds_local = ((m / parts) / (2 * q_used)).max(1);
            let f = MiOracle::new(model);
            let oracle = ValueOracle::new(&f);
            let dist = distributed_batch_greedy(
                &oracle,
                parts,
                rounds_local,
                parts * rounds_local,
                q_used,
                derive_seed(instance_seed, 0xD157),
            )?;
            Ok(RunResult {
                evals_at: cumulative_evals(&dist.trace),
                order: dist.trace.selection_order(),
                q_used,
            })
        }
        Heuristic::Stochastic => {
            let k = (m / 2).max(q).min(m);
            let schedule = BatchSchedule::uniform(q, k)?;
            let base = StochasticConfig::new(m, k, q, cfg.stochastic_epsilon, 0)?;
            let stoch = StochasticConfig {
                sample_size: base.sample_size.max(q),
                seed: derive_seed(instance_seed, 0x57CC),
                ..base
            };
            let f = MiOracle::new(model);
            let oracle = ValueOracle::new(&f);
            let trace = stochastic_batch_greedy(&oracle, &schedule, &stoch)?;
            Ok(RunResult {
                evals_at: cumulative_evals(&trace),
                order: trace.selection_order(),
                q_used: q,
            })
        }
        Heuristic::RandomSelection => Err(Error::InvalidConfig(
            "random selection is handled separately".into(),
        )),
    }
}

fn instance_rows(cfg: &ExperimentConfig, instance: usize) -> Result<Vec<SweepRow>> {
    let seed = cfg.instance_seed(instance);
    let model = cfg.problem.build_instance(seed)?;
    let m = model.observation_dim();
    let total_mi = mutual_information(&model, &IndexSet::full(m))?;
    let relative = |mi: f64| {
        if total_mi > 0.0 {
            (mi / total_mi).max(0.0)
        } else {
            0.0
        }
    };

    let mut rows = Vec::new();
    for &heuristic in &cfg.heuristics {
        if heuristic == Heuristic::RandomSelection {
            for draw in 0..cfg.num_random_selections {
                let draw_seed = derive_seed(seed, 0x7A31_0000 + draw as u64);
                let mut order: Vec<usize> = (0..m).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
                order.shuffle(&mut rng);
                let curve = prefix_curve(&model, &order, m)?;
                for (c, &mi) in curve.iter().enumerate() {
                    rows.push(SweepRow {
                        instance_id: instance,
                        heuristic: heuristic.name(),
                        batch_fraction: 0.0,
                        q: 0,
                        cardinality: c + 1,
                        mi,
                        mi_relative: relative(mi),
                        evals: c as u64 + 1,
                        seed: draw_seed,
                    });
                }
            }
            continue;
        }
        for &fraction in &cfg.batch_fractions {
            let q = ExperimentConfig::batch_size(fraction, m);
            let run = run_heuristic(heuristic, &model, q, cfg, seed)?;
            let limit = run.order.len();
            let curve = prefix_curve(&model, &run.order, limit)?;
            for (c, &mi) in curve.iter().enumerate() {
                rows.push(SweepRow {
                    instance_id: instance,
                    heuristic: heuristic.name(),
                    batch_fraction: fraction,
                    q: run.q_used,
                    cardinality: c + 1,
                    mi,
                    mi_relative: relative(mi),
                    evals: run.evals_at.get(c).copied().unwrap_or(0),
                    seed,
                });
            }
        }
    }
    Ok(rows)
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

fn summarize(rows: &[SweepRow]) -> Summary {
    let mut grouped: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for row in rows {
        let key = (
            row.heuristic.to_string(),
            format!("{:.4}", row.batch_fraction),
            format!("{:04}", row.cardinality),
        );
        grouped.entry(key).or_default().push(row.mi_relative);
    }
    let mut summary: Summary = BTreeMap::new();
    for ((heuristic, fraction, cardinality), mut values) in grouped {
        values.sort_by(|a, b| a.total_cmp(b));
        let stats = QuantileStats {
            median: quantile(&values, 0.5),
            q10: quantile(&values, 0.1),
            q90: quantile(&values, 0.9),
            min: values[0],
            max: *values.last().unwrap(),
        };
        summary
            .entry(heuristic)
            .or_default()
            .entry(fraction)
            .or_default()
            .insert(cardinality, stats);
    }
    summary
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "instance_id,heuristic,batch_fraction,q,cardinality,mi,mi_relative,evals,seed\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.instance_id,
            r.heuristic,
            r.batch_fraction,
            r.q,
            r.cardinality,
            r.mi,
            r.mi_relative,
            r.evals,
            r.seed
        ));
    }
    out
}

/// Runs the sweep and writes `runs.csv` and `summary.json` into `out_dir`.
/// Instances run in parallel with derived seeds; outputs are identical for
/// any thread count.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SweepOutput> {
    cfg.validate()?;
    let per_instance: Vec<Result<Vec<SweepRow>>> = (0..cfg.num_instances)
        .into_par_iter()
        .map(|i| instance_rows(cfg, i))
        .collect();
    let mut rows = Vec::new();
    for chunk in per_instance {
        rows.extend(chunk?);
    }
    let summary = summarize(&rows);

    std::fs::create_dir_all(out_dir)?;
    let mut csv_file = std::fs::File::create(out_dir.join("runs.csv"))?;
    csv_file.write_all(rows_to_csv(&rows).as_bytes())?;
    let mut json_file = std::fs::File::create(out_dir.join("summary.json"))?;
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::InvalidConfig(format!("summary serialization: {e}")))?;
    json_file.write_all(json.as_bytes())?;
    json_file.write_all(b"\n")?;

    Ok(SweepOutput { rows, summary })
}
