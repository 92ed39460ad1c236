//! Guarantee verification: replays the approximation-factor inequalities,
//! modular-bound sandwiches, spectral identities, and eval-count models on
//! seeded random instances at desk scale, and reports the worst violation
//! of each.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cli::config::{derive_seed, ExperimentConfig, ProblemSpec};
use crate::error::{Error, Result};
use crate::greedy::{
    batch_greedy, eval_count_model, guarantee_factor, stochastic_batch_greedy, BatchSchedule,
    EvalCountVariant, StochasticConfig,
};
use crate::mm::tau_certificate;
use crate::oed::{
    expected_sym_kl, mi_modular_bounds, mi_spectrum, mm_greedy_mi, posterior_covariance,
    ratio_lower_bound, submodularity_deviation, LinearGaussianModel, MiLowerBoundProvider,
    MiOracle,
};
use crate::problems::{random_correlated_model, random_diagonal_noise_model};
use crate::setfn::{IndexSet, PowerSetTable, ValueOracle};

const MAX_VERIFY_M: usize = 12;
const MAX_VERIFY_K: usize = 6;

/// Test hook: lets the negative-control test corrupt one quantity and watch
/// the matching inequality fail. The CLI always runs uncorrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    None,
    /// Inflates the brute-force optimum used by the batch-guarantee check.
    InflateOptimum,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub trials: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub instances: usize,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

#[derive(Default, Clone)]
struct Accumulator {
    trials: usize,
    max_violation: f64,
}

impl Accumulator {
    fn record(&mut self, violation: f64) {
        self.trials += 1;
        self.max_violation = self.max_violation.max(violation);
    }

    fn merge(&mut self, other: &Accumulator) {
        self.trials += other.trials;
        self.max_violation = self.max_violation.max(other.max_violation);
    }
}

#[derive(Default, Clone)]
struct InstanceViolations {
    batch_guarantee: Accumulator,
    mm_guarantee: Accumulator,
    modular_sandwich: Accumulator,
    pencil_equivalence: Accumulator,
    ratio_bound: Accumulator,
    diagonal_submodular: Accumulator,
    sym_kl: Accumulator,
    eval_counts: Accumulator,
    deviation_bound: Accumulator,
}

fn random_subset(m: usize, rng: &mut ChaCha8Rng) -> IndexSet {
    loop {
        let mask: u64 = rng.gen_range(0..(1u64 << m));
        if mask != 0 {
            return IndexSet::from_mask(mask, m);
        }
    }
}

fn check_instance(
    model: &LinearGaussianModel,
    k: usize,
    batch_sizes: &[usize],
    seed: u64,
    corruption: Corruption,
) -> Result<InstanceViolations> {
    let mut v = InstanceViolations::default();
    let m = model.observation_dim();
    let f = MiOracle::new(model);
    let oracle = ValueOracle::new(&f);
    let table = PowerSetTable::build(&oracle)?;
    let (opt_set, opt_val_honest) = table.optimum(k);
    let opt_val = match corruption {
        Corruption::None => opt_val_honest,
        Corruption::InflateOptimum => opt_val_honest * 1.5,
    };
    let gamma_k = table.ratio_report(k).submodularity.value;

    // Batch guarantee and eval-count model, per batch size.
    for &q in batch_sizes {
        let q = q.min(k);
        let eta_q = table.ratio_report(q).supermodularity.value;
        let schedule = BatchSchedule::uniform(q, k)?;
        let run_oracle = ValueOracle::new(&f);
        let trace = batch_greedy(&run_oracle, &schedule)?;
        let etas: Vec<f64> = schedule
            .batches()
            .iter()
            .map(|&qi| {
                if qi == q {
                    eta_q
                } else {
                    table.ratio_report(qi).supermodularity.value
                }
            })
            .collect();
        let factor = guarantee_factor(&schedule, gamma_k, &etas);
        v.batch_guarantee
            .record(factor * opt_val - trace.objective());
        let predicted = eval_count_model(m, &schedule, EvalCountVariant::Standard);
        v.eval_counts
            .record((trace.total_evals as f64 - predicted as f64).abs());

        // MM guarantee via tau certificates on the same schedule.
        let mm_trace = mm_greedy_mi(model, &schedule)?;
        let provider = MiLowerBoundProvider::new(model);
        let cert_oracle = ValueOracle::new(&f);
        let cert = tau_certificate(&cert_oracle, &provider, &mm_trace, &opt_set)?;
        v.mm_guarantee
            .record(cert.guarantee * opt_val_honest - mm_trace.objective());
    }

    // One-shot and stochastic count models.
    {
        let one = BatchSchedule::uniform(k, k)?;
        let run_oracle = ValueOracle::new(&f);
        let trace = batch_greedy(&run_oracle, &one)?;
        let predicted = eval_count_model(m, &one, EvalCountVariant::OneShot);
        v.eval_counts
            .record((trace.total_evals as f64 - predicted as f64).abs());

        let sched = BatchSchedule::uniform(1, k)?;
        let cfg = StochasticConfig::new(m, k, 1, 0.5, derive_seed(seed, 0xEC))?;
        let run_oracle = ValueOracle::new(&f);
        let trace = stochastic_batch_greedy(&run_oracle, &sched, &cfg)?;
        let predicted = eval_count_model(
            m,
            &sched,
            EvalCountVariant::Stochastic {
                sample_size: cfg.sample_size,
            },
        );
        v.eval_counts
            .record((trace.total_evals as f64 - predicted as f64).abs());
    }

    // Modular-bound sandwiches, unconditioned and conditioned.
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5A));
    let full_set = IndexSet::full(m);
    let mi_full = table.value(&full_set);
    let deviation_full = submodularity_deviation(model, &full_set)?;
    for trial in 0..16 {
        let conditioning = if trial % 4 == 0 {
            IndexSet::empty()
        } else {
            let s = random_subset(m, &mut rng);
            if s.len() == m {
                IndexSet::empty()
            } else {
                s
            }
        };
        let bounds = mi_modular_bounds(model, &conditioning)?;
        let candidates = conditioning.complement(m);
        let subset: IndexSet = {
            let pool = candidates.as_slice();
            let take = rng.gen_range(1..=pool.len());
            let mut chosen: Vec<usize> = pool.to_vec();
            for i in (1..chosen.len()).rev() {
                let j = rng.gen_range(0..=i);
                chosen.swap(i, j);
            }
            chosen.truncate(take);
            IndexSet::new(chosen)
        };
        let mi_cond = table.value(&conditioning.union(&subset)) - table.value(&conditioning);
        let scale = mi_cond.abs().max(1.0);
        let lower = bounds.lower_sum(&subset)?;
        let upper = bounds.upper_sum(&subset)?;
        let alt_lower = bounds.alt_lower_sum(&subset)?;
        let alt_upper = bounds.alt_upper_sum(&subset)?;
        v.modular_sandwich.record((lower - mi_cond) / scale);
        v.modular_sandwich.record((mi_cond - upper) / scale);
        v.modular_sandwich.record((alt_lower - mi_cond) / scale);
        v.modular_sandwich.record((mi_cond - alt_upper) / scale);

        // Deviation inequality: loss(S) <= MI(S) + deviation(V).
        let loss = mi_full - table.value(&subset.complement(m));
        let mi_s = table.value(&subset);
        v.deviation_bound.record(loss - mi_s - deviation_full);
    }

    // Pencil equivalence: sorted descending, the top min(m, n) eigenvalues
    // of the data- and parameter-space pencils coincide, and the trailing
    // |m - n| eigenvalues of the longer pencil are exactly one.
    {
        let n = model.parameter_dim();
        let data_zetas = mi_spectrum(model, &full_set)?;
        let post = posterior_covariance(model, &full_set)?;
        let param_zetas = crate::linalg::gen_eigvals(model.prior().as_sym(), &post)?;
        let shared = m.min(n);
        for j in 0..shared {
            let (a, b) = (data_zetas[j], param_zetas[j]);
            v.pencil_equivalence.record((a - b).abs() / b.abs());
        }
        let longer = if m >= n { &data_zetas } else { &param_zetas };
        for z in longer.iter().skip(shared) {
            v.pencil_equivalence.record((z - 1.0).abs());
        }
    }

    // Ratio lower bound on a companion instance with more parameters than
    // observations (elsewhere the bound is trivially zero).
    {
        let small_m = m.min(8);
        let companion = random_correlated_model(small_m + 3, small_m, derive_seed(seed, 0x3B))?;
        let bound = ratio_lower_bound(&companion)?;
        let cf = MiOracle::new(&companion);
        let co = ValueOracle::new(&cf);
        let ctable = PowerSetTable::build(&co)?;
        let kk = k.min(small_m);
        let report = ctable.ratio_report(kk);
        v.ratio_bound.record(bound - report.submodularity.value);
        v.ratio_bound.record(bound - report.supermodularity.value);
    }

    // Conditional independence implies submodularity: exhaustive
    // diminishing-returns check on a diagonal-noise companion.
    {
        let small_m = m.min(8);
        let companion =
            random_diagonal_noise_model(model.parameter_dim(), small_m, derive_seed(seed, 0x77))?;
        let cf = MiOracle::new(&companion);
        let co = ValueOracle::new(&cf);
        v.diagonal_submodular
            .record(PowerSetTable::build(&co)?.diminishing_returns_violation());
    }

    // Expected symmetrized KL identity on random subsets.
    for _ in 0..4 {
        let s = random_subset(m, &mut rng);
        let trace_form = expected_sym_kl(model, &s)?;
        let spectral: f64 = mi_spectrum(model, &s)?.iter().map(|z| z - 1.0).sum();
        v.sym_kl.record((trace_form - spectral).abs());
    }

    Ok(v)
}

fn build_checks(total: &InstanceViolations) -> Vec<CheckResult> {
    let named = [
        ("batch_greedy_guarantee", &total.batch_guarantee, 1e-9),
        ("mm_greedy_tau_guarantee", &total.mm_guarantee, 1e-9),
        ("mi_modular_bound_sandwich", &total.modular_sandwich, 1e-8),
        ("pencil_equivalence", &total.pencil_equivalence, 1e-6),
        ("sub_super_ratio_lower_bound", &total.ratio_bound, 1e-9),
        (
            "diagonal_noise_submodularity",
            &total.diagonal_submodular,
            1e-10,
        ),
        ("expected_sym_kl_identity", &total.sym_kl, 1e-8),
        ("eval_count_model_exact", &total.eval_counts, 0.0),
        ("deviation_loss_bound", &total.deviation_bound, 1e-9),
    ];
    named
        .into_iter()
        .map(|(name, acc, tolerance)| CheckResult {
            name: name.to_string(),
            trials: acc.trials,
            max_violation: acc.max_violation,
            tolerance,
            pass: acc.max_violation <= tolerance,
        })
        .collect()
}

/// Verification entry point with the corruption hook exposed for tests.
pub fn run_verify(cfg: &ExperimentConfig, corruption: Corruption) -> Result<VerifyReport> {
    cfg.validate()?;
    if !cfg.verify_mode {
        return Err(Error::InvalidConfig(
            "config does not enable verify_mode".into(),
        ));
    }
    let m = match &cfg.problem {
        ProblemSpec::Generator { m, .. } => *m,
        ProblemSpec::Ensemble { .. } => {
            return Err(Error::InvalidConfig(
                "verification runs on generator problems only".into(),
            ))
        }
    };
    if m > MAX_VERIFY_M {
        return Err(Error::TooLarge(format!(
            "verification guard: m = {m} exceeds {MAX_VERIFY_M}"
        )));
    }
    if cfg.verify_cardinality > MAX_VERIFY_K {
        return Err(Error::TooLarge(format!(
            "verification guard: k = {} exceeds {MAX_VERIFY_K}",
            cfg.verify_cardinality
        )));
    }

    let per_instance: Vec<Result<InstanceViolations>> = (0..cfg.num_instances)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.instance_seed(i);
            let model = cfg.problem.build_instance(seed)?;
            check_instance(
                &model,
                cfg.verify_cardinality,
                &cfg.verify_batch_sizes,
                seed,
                corruption,
            )
        })
        .collect();

    let mut total = InstanceViolations::default();
    for item in per_instance {
        let item = item?;
        total.batch_guarantee.merge(&item.batch_guarantee);
        total.mm_guarantee.merge(&item.mm_guarantee);
        total.modular_sandwich.merge(&item.modular_sandwich);
        total.pencil_equivalence.merge(&item.pencil_equivalence);
        total.ratio_bound.merge(&item.ratio_bound);
        total.diagonal_submodular.merge(&item.diagonal_submodular);
        total.sym_kl.merge(&item.sym_kl);
        total.eval_counts.merge(&item.eval_counts);
        total.deviation_bound.merge(&item.deviation_bound);
    }

    let checks = build_checks(&total);
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerifyReport {
        instances: cfg.num_instances,
        checks,
        pass,
    })
}

/// Runs the verification suite and writes `verify_report.json` to `out_dir`.
pub fn verify_guarantees(cfg: &ExperimentConfig, out_dir: &Path) -> Result<VerifyReport> {
    let report = run_verify(cfg, Corruption::None)?;
    std::fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::InvalidConfig(format!("report serialization: {e}")))?;
    let mut file = std::fs::File::create(out_dir.join("verify_report.json"))?;
    file.write_all(json.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(report)
}
