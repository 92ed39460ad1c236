//! Batch greedy selection and its distributed and stochastic variants, the
//! guarantee-factor calculators that go with them, and exact oracle-call
//! accounting.
//!
//! Counting convention: every evaluation that drives a selection decision
//! goes through the counted oracle path. Per step that is one shared call
//! on the current selection plus one call per candidate whose gain is
//! ranked. Trace objectives reuse those shared calls where possible; only
//! the objective of the final step is filled in through the uncounted path,
//! so observed counts equal [`eval_count_model`] exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::setfn::{IndexSet, ValueOracle};

/// Per-step batch sizes `q_1, .., q_l`; the cardinality target is their sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSchedule {
    batches: Vec<usize>,
}

impl BatchSchedule {
    /// An empty schedule is allowed and makes every algorithm a no-op.
    pub fn new(batches: Vec<usize>) -> Result<Self> {
        if batches.contains(&0) {
            return Err(Error::InvalidConfig(
                "every batch size must be at least 1".into(),
            ));
        }
        Ok(Self { batches })
    }

    /// Uniform batches of size `q` covering `k` indices; the final batch is
    /// truncated to `k mod q` when `q` does not divide `k`.
    pub fn uniform(q: usize, k: usize) -> Result<Self> {
        if q == 0 || k == 0 {
            return Err(Error::InvalidConfig(
                "batch size and cardinality must be positive".into(),
            ));
        }
        let mut batches = vec![q; k / q];
        if !k.is_multiple_of(q) {
            batches.push(k % q);
        }
        Self::new(batches)
    }

    pub fn batches(&self) -> &[usize] {
        &self.batches
    }

    pub fn steps(&self) -> usize {
        self.batches.len()
    }

    pub fn total(&self) -> usize {
        self.batches.iter().sum()
    }
}

/// One executed step: the chosen batch, the indices in pick order, the
/// objective after the step, and the counted oracle calls the step consumed.
#[derive(Debug, Clone)]
pub struct SelectionStep {
    pub batch: IndexSet,
    pub picked: Vec<usize>,
    pub objective: f64,
    pub evals: u64,
}

/// Ordered record of the batches chosen by a run.
#[derive(Debug, Clone)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
    pub final_set: IndexSet,
    pub total_evals: u64,
}

impl SelectionTrace {
    /// Final objective value.
    pub fn objective(&self) -> f64 {
        self.steps.last().map(|s| s.objective).unwrap_or(0.0)
    }

    /// All selected indices in the order they were picked.
    pub fn selection_order(&self) -> Vec<usize> {
        self.steps
            .iter()
            .flat_map(|s| s.picked.iter().copied())
            .collect()
    }
}

/// Ranks `(index, gain)` pairs by gain descending, index ascending, and
/// returns the top `q` in pick order.
fn top_q(mut scored: Vec<(usize, f64)>, q: usize) -> Vec<usize> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(q);
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Standard batch greedy over an explicit candidate pool (a subset of the
/// oracle's ground set). Selection still evaluates full sets against the
/// original function.
fn batch_greedy_over(
    oracle: &ValueOracle,
    pool: &IndexSet,
    schedule: &BatchSchedule,
) -> Result<SelectionTrace> {
    if schedule.total() > pool.len() {
        return Err(Error::ScheduleExceedsGround {
            requested: schedule.total(),
            available: pool.len(),
        });
    }
    let mut selected = IndexSet::empty();
    let mut steps: Vec<SelectionStep> = Vec::with_capacity(schedule.steps());
    let start_evals = oracle.eval_count();

    for (step_no, &q) in schedule.batches().iter().enumerate() {
        let evals_before = oracle.eval_count();
        let base = oracle.value(&selected);
        if step_no > 0 {
            // The shared call on the current selection doubles as the
            // objective of the previous step.
            steps[step_no - 1].objective = base;
        }
        let remaining: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| !selected.contains(i))
            .collect();
        let scored: Vec<(usize, f64)> = remaining
            .iter()
            .map(|&i| (i, oracle.value(&selected.with(i)) - base))
            .collect();
        let picked = top_q(scored, q);
        for &i in &picked {
            selected = selected.with(i);
        }
        steps.push(SelectionStep {
            batch: IndexSet::new(picked.clone()),
            picked,
            objective: f64::NAN,
            evals: oracle.eval_count() - evals_before,
        });
    }
    // Only the last step lacks a counted follow-up call; fill it in through
    // the uncounted path.
    if let Some(last) = steps.last_mut() {
        last.objective = oracle.peek(&selected);
    }
    Ok(SelectionTrace {
        steps,
        final_set: selected,
        total_evals: oracle.eval_count() - start_evals,
    })
}

/// Standard batch greedy: at every step, ranks each remaining candidate by
/// its incremental gain given the current selection and appends the `q_i`
/// best.
pub fn batch_greedy(oracle: &ValueOracle, schedule: &BatchSchedule) -> Result<SelectionTrace> {
    let m = oracle.ground_size();
    if schedule.total() > m {
        return Err(Error::ScheduleExceedsGround {
            requested: schedule.total(),
            available: m,
        });
    }
    batch_greedy_over(oracle, &IndexSet::full(m), schedule)
}

/// Output of the distributed variant: the seeded partition, the local runs,
/// the merged candidate pool, and the final pass over it.
#[derive(Debug, Clone)]
pub struct DistributedTrace {
    pub partitions: Vec<IndexSet>,
    pub partition_traces: Vec<SelectionTrace>,
    pub merged: IndexSet,
    pub trace: SelectionTrace,
}

/// Distributed batch greedy: partitions the ground set uniformly at random
/// (seeded), runs batch greedy with `rounds_local` uniform batches of size
/// `q` inside each partition, merges the local selections, and reruns batch
/// greedy for `rounds_merge` rounds over the merged pool.
pub fn distributed_batch_greedy(
    oracle: &ValueOracle,
    num_partitions: usize,
    rounds_local: usize,
    rounds_merge: usize,
    q: usize,
    partition_seed: u64,
) -> Result<DistributedTrace> {
    let m = oracle.ground_size();
    if num_partitions == 0 {
        return Err(Error::InvalidConfig("need at least one partition".into()));
    }
    if q == 0 || rounds_local == 0 || rounds_merge == 0 {
        return Err(Error::InvalidConfig(
            "batch size and round counts must be positive".into(),
        ));
    }
    if num_partitions > m {
        return Err(Error::PartitionTooSmall {
            partition: 0,
            requested: q * rounds_local,
        });
    }

    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(partition_seed);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);

    // Balanced contiguous chunks of the shuffled order: the first
    // `m mod num_partitions` partitions take the extra element.
    let base = m / num_partitions;
    let extra = m % num_partitions;
    let mut partitions = Vec::with_capacity(num_partitions);
    let mut cursor = 0;
    for p in 0..num_partitions {
        let len = base + usize::from(p < extra);
        partitions.push(IndexSet::new(order[cursor..cursor + len].to_vec()));
        cursor += len;
    }

    let local_target = q * rounds_local;
    for part in &partitions {
        if local_target > part.len() {
            return Err(Error::PartitionTooSmall {
                partition: part.len(),
                requested: local_target,
            });
        }
    }

    let local_schedule = BatchSchedule::new(vec![q; rounds_local])?;
    let mut partition_traces = Vec::with_capacity(num_partitions);
    let mut merged = IndexSet::empty();
    for part in &partitions {
        let trace = batch_greedy_over(oracle, part, &local_schedule)?;
        merged = merged.union(&trace.final_set);
        partition_traces.push(trace);
    }

    let merge_target = q * rounds_merge;
    if merge_target > merged.len() {
        return Err(Error::ScheduleExceedsGround {
            requested: merge_target,
            available: merged.len(),
        });
    }
    let merge_schedule = BatchSchedule::new(vec![q; rounds_merge])?;
    let trace = batch_greedy_over(oracle, &merged, &merge_schedule)?;
    Ok(DistributedTrace {
        partitions,
        partition_traces,
        merged,
        trace,
    })
}

/// Parameters of the stochastic variant: per-step sample size
/// `s = ceil((m/k) ln(q/ε))` and the seed that fixes every draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticConfig {
    pub epsilon: f64,
    pub sample_size: usize,
    pub seed: u64,
}

impl StochasticConfig {
    pub fn new(m: usize, k: usize, q: usize, epsilon: f64, seed: u64) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 || epsilon >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be in (0,1), got {epsilon}"
            )));
        }
        if k == 0 || q == 0 || m == 0 {
            return Err(Error::InvalidConfig("m, k, q must be positive".into()));
        }
        let s = ((m as f64 / k as f64) * (q as f64 / epsilon).ln()).ceil() as usize;
        Ok(Self {
            epsilon,
            sample_size: s.max(1),
            seed,
        })
    }

    pub fn with_sample_size(sample_size: usize, seed: u64) -> Result<Self> {
        if sample_size == 0 {
            return Err(Error::InvalidConfig("sample size must be positive".into()));
        }
        Ok(Self {
            epsilon: 0.5,
            sample_size,
            seed,
        })
    }
}

/// Stochastic batch greedy: each step draws `min(s, |remaining|)` candidates
/// without replacement from the unselected indices, ranks gains only on the
/// sample, and keeps the `q_i` best. Draws use an RNG stream derived from
/// `(seed, step)` so results are identical across thread counts.
pub fn stochastic_batch_greedy(
    oracle: &ValueOracle,
    schedule: &BatchSchedule,
    cfg: &StochasticConfig,
) -> Result<SelectionTrace> {
    let m = oracle.ground_size();
    if schedule.total() > m {
        return Err(Error::ScheduleExceedsGround {
            requested: schedule.total(),
            available: m,
        });
    }
    if let Some(&q) = schedule.batches().iter().find(|&&q| q > cfg.sample_size) {
        return Err(Error::BatchExceedsSample {
            batch: q,
            sample: cfg.sample_size,
        });
    }

    let mut selected = IndexSet::empty();
    let mut steps: Vec<SelectionStep> = Vec::with_capacity(schedule.steps());
    let start_evals = oracle.eval_count();

    for (step_no, &q) in schedule.batches().iter().enumerate() {
        let evals_before = oracle.eval_count();
        let base = oracle.value(&selected);
        if step_no > 0 {
            steps[step_no - 1].objective = base;
        }
        let remaining: Vec<usize> = (0..m).filter(|&i| !selected.contains(i)).collect();
        let draw = cfg.sample_size.min(remaining.len());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(step_no as u64 + 1);
        let mut sample: Vec<usize> = rand::seq::index::sample(&mut rng, remaining.len(), draw)
            .into_iter()
            .map(|p| remaining[p])
            .collect();
        sample.sort_unstable();

        let scored: Vec<(usize, f64)> = sample
            .iter()
            .map(|&i| (i, oracle.value(&selected.with(i)) - base))
            .collect();
        let picked = top_q(scored, q);
        for &i in &picked {
            selected = selected.with(i);
        }
        steps.push(SelectionStep {
            batch: IndexSet::new(picked.clone()),
            picked,
            objective: f64::NAN,
            evals: oracle.eval_count() - evals_before,
        });
    }
    if let Some(last) = steps.last_mut() {
        last.objective = oracle.peek(&selected);
    }
    Ok(SelectionTrace {
        steps,
        final_set: selected,
        total_evals: oracle.eval_count() - start_evals,
    })
}

/// The batch greedy approximation factor
/// `1 - Π_i (1 - q_i η_{V,q_i} γ_{V,k} / k)`, with one supermodularity ratio
/// per batch.
pub fn guarantee_factor(schedule: &BatchSchedule, gamma: f64, etas_per_batch: &[f64]) -> f64 {
    assert_eq!(schedule.steps(), etas_per_batch.len(), "one eta per batch");
    let k = schedule.total() as f64;
    let mut product = 1.0;
    for (&q, &eta) in schedule.batches().iter().zip(etas_per_batch) {
        product *= 1.0 - q as f64 * eta * gamma / k;
    }
    1.0 - product
}

/// The simplified exponential form `1 - e^{-η γ}` of the batch guarantee
/// (uniform batches).
pub fn simplified_guarantee(gamma: f64, eta: f64) -> f64 {
    1.0 - (-eta * gamma).exp()
}

/// The tight one-shot (`q = k`) factor `η γ`.
pub fn one_shot_guarantee(gamma: f64, eta: f64) -> f64 {
    eta * gamma
}

/// The distributed batch greedy factor
/// `(1 - e^{-η γ_k̂ l̃/l̂})(1 - e^{-η γ_k l̂/l}) γ_k / k` for uniform batch
/// size `q`, where `k = q l`, `k̂ = q l̂`.
pub fn distributed_guarantee_factor(
    q: usize,
    rounds: usize,
    rounds_local: usize,
    rounds_merge: usize,
    gamma_k: f64,
    gamma_k_local: f64,
    eta_q: f64,
) -> f64 {
    let k = (q * rounds) as f64;
    let merge_term =
        1.0 - (-eta_q * gamma_k_local * rounds_merge as f64 / rounds_local as f64).exp();
    let local_term = 1.0 - (-eta_q * gamma_k * rounds_local as f64 / rounds as f64).exp();
    merge_term * local_term * gamma_k / k
}

/// The stochastic batch greedy factor `1 - e^{-(1-ε) γ η}` on the expected
/// objective.
pub fn stochastic_guarantee(gamma: f64, eta: f64, epsilon: f64) -> f64 {
    1.0 - (-(1.0 - epsilon) * gamma * eta).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalCountVariant {
    /// Full gain recomputation each step.
    Standard,
    /// Single pass with `q = k`.
    OneShot,
    /// Gains only on the per-step sample of the given size.
    Stochastic { sample_size: usize },
}

/// Closed-form predicted oracle-call count for a run; implementations match
/// this exactly.
pub fn eval_count_model(m: usize, schedule: &BatchSchedule, variant: EvalCountVariant) -> u64 {
    match variant {
        EvalCountVariant::Standard => {
            let mut picked = 0usize;
            let mut total = 0u64;
            for &q in schedule.batches() {
                total += 1 + (m - picked) as u64;
                picked += q;
            }
            total
        }
        EvalCountVariant::OneShot => m as u64 + 1,
        EvalCountVariant::Stochastic { sample_size } => {
            let mut picked = 0usize;
            let mut total = 0u64;
            for &q in schedule.batches() {
                total += 1 + sample_size.min(m - picked) as u64;
                picked += q;
            }
            total
        }
    }
}
