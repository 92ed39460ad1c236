//! Ground-set and selection-set types, the monotone value-oracle abstraction
//! with call counting, incremental gains, and brute-force oracles (optimum,
//! submodularity ratio, supermodularity ratio).
//!
//! The brute-force routines are deliberately exhaustive: they exist to
//! certify the approximation guarantees at desk scale, not to be fast. They
//! tabulate the function over the full power set once (one counted oracle
//! call per subset) and then work from the table.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// The candidate index set `{0, .., m-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundSet {
    m: usize,
}

impl GroundSet {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("ground set must be non-empty".into()));
        }
        Ok(Self { m })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> {
        0..self.m
    }

    pub fn full_set(&self) -> IndexSet {
        IndexSet {
            idx: (0..self.m).collect(),
        }
    }
}

/// Ordered, duplicate-free subset of the ground set. Stands in for a
/// column-selection operator applied to the identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct IndexSet {
    idx: Vec<usize>,
}

impl IndexSet {
    /// Sorts and deduplicates the given indices.
    pub fn new(mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        idx.dedup();
        Self { idx }
    }

    pub fn empty() -> Self {
        Self { idx: Vec::new() }
    }

    pub fn singleton(i: usize) -> Self {
        Self { idx: vec![i] }
    }

    pub fn full(m: usize) -> Self {
        Self {
            idx: (0..m).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.idx.binary_search(&i).is_ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.idx.iter()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.idx
    }

    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.idx.iter().all(|i| other.contains(*i))
    }

    pub fn is_disjoint_from(&self, other: &IndexSet) -> bool {
        self.idx.iter().all(|i| !other.contains(*i))
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let mut idx = self.idx.clone();
        idx.extend_from_slice(&other.idx);
        idx.sort_unstable();
        idx.dedup();
        IndexSet { idx }
    }

    /// Set with `i` inserted.
    pub fn with(&self, i: usize) -> IndexSet {
        if self.contains(i) {
            return self.clone();
        }
        let pos = self.idx.partition_point(|&x| x < i);
        let mut idx = self.idx.clone();
        idx.insert(pos, i);
        IndexSet { idx }
    }

    pub fn minus(&self, other: &IndexSet) -> IndexSet {
        IndexSet {
            idx: self
                .idx
                .iter()
                .copied()
                .filter(|i| !other.contains(*i))
                .collect(),
        }
    }

    pub fn complement(&self, m: usize) -> IndexSet {
        IndexSet {
            idx: (0..m).filter(|i| !self.contains(*i)).collect(),
        }
    }

    pub(crate) fn from_mask(mask: u64, m: usize) -> IndexSet {
        IndexSet {
            idx: (0..m).filter(|i| mask >> i & 1 == 1).collect(),
        }
    }

    pub(crate) fn to_mask(&self) -> u64 {
        self.idx.iter().fold(0u64, |acc, &i| acc | 1u64 << i)
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        IndexSet::new(iter.into_iter().collect())
    }
}

/// A real-valued set function on subsets of `{0, .., ground_size() - 1}`.
///
/// Implementations must be pure: the same subset always evaluates to the
/// same value, and concurrent evaluation is safe.
pub trait SetFunction: Sync {
    fn ground_size(&self) -> usize;
    fn evaluate(&self, set: &IndexSet) -> f64;
}

/// Wraps a set function with an atomic counter of evaluations.
///
/// `value` is the counted path used for every evaluation that drives an
/// algorithm's decisions. `peek` evaluates without counting and is reserved
/// for trace bookkeeping (e.g. the objective of the final batch), so the
/// observed counts match the closed-form evaluation models exactly.
pub struct ValueOracle<'a> {
    f: &'a dyn SetFunction,
    evals: AtomicU64,
}

impl<'a> ValueOracle<'a> {
    pub fn new(f: &'a dyn SetFunction) -> Self {
        Self {
            f,
            evals: AtomicU64::new(0),
        }
    }

    pub fn ground_size(&self) -> usize {
        self.f.ground_size()
    }

    pub fn ground(&self) -> GroundSet {
        GroundSet {
            m: self.f.ground_size(),
        }
    }

    pub fn value(&self, set: &IndexSet) -> f64 {
        self.evals.fetch_add(1, Ordering::Relaxed);
        self.f.evaluate(set)
    }

    pub fn peek(&self, set: &IndexSet) -> f64 {
        self.f.evaluate(set)
    }

    pub fn eval_count(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }
}

/// Incremental gain of `a` given `b`: `F(a ∪ b) - F(b)`.
///
/// Spends exactly two oracle evaluations, or one when `a ⊆ b` (the gain is
/// identically zero).
pub fn incremental_gain(oracle: &ValueOracle, a: &IndexSet, b: &IndexSet) -> f64 {
    if a.is_subset_of(b) {
        let _ = oracle.value(b);
        return 0.0;
    }
    let joint = oracle.value(&a.union(b));
    let base = oracle.value(b);
    joint - base
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

const BRUTE_FORCE_GUARD: u128 = 10_000_000;

/// Exhaustive maximizer of `F` over all subsets of size at most `k`.
///
/// Ties are broken toward the lexicographically smallest index list. Errors
/// with `TooLarge` when the total number of candidate subsets exceeds 10^7.
pub fn brute_force_opt(oracle: &ValueOracle, k: usize) -> Result<(IndexSet, f64)> {
    let m = oracle.ground_size();
    let k = k.min(m);
    let total: u128 = (0..=k).map(|j| binomial(m, j)).sum();
    if total > BRUTE_FORCE_GUARD {
        return Err(Error::TooLarge(format!(
            "{total} subsets of size <= {k} from {m} elements"
        )));
    }

    let mut best_set = IndexSet::empty();
    let mut best_val = oracle.value(&best_set);
    for size in 1..=k {
        let mut comb: Vec<usize> = (0..size).collect();
        loop {
            let cand = IndexSet { idx: comb.clone() };
            let val = oracle.value(&cand);
            if val > best_val || (val == best_val && cand.idx < best_set.idx) {
                best_val = val;
                best_set = cand;
            }
            // Advance to the next lexicographic combination.
            let mut i = size;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if comb[i] != i + m - size {
                    comb[i] += 1;
                    for j in i + 1..size {
                        comb[j] = comb[j - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    comb.clear();
                    break;
                }
            }
            if comb.is_empty() {
                break;
            }
        }
    }
    Ok((best_set, best_val))
}

const RATIO_ENUM_MAX_M: usize = 14;
const EPS_ZERO_GAIN: f64 = 1e-12;

/// One of the two worst-case gain ratios, with both the raw minimum and the
/// value capped at 1 that enters the theorem statements.
#[derive(Debug, Clone)]
pub struct RatioValue {
    /// `min(raw, 1)`, the value used by the approximation guarantees.
    pub value: f64,
    /// The uncapped minimum; useful diagnostically (e.g. > 1 certifies
    /// strict submodularity margins).
    pub raw: f64,
    /// The minimizing pair `(A, B)`, when any pair had a non-negligible
    /// denominator.
    pub witness: Option<(IndexSet, IndexSet)>,
}

#[derive(Debug, Clone)]
pub struct RatioReport {
    pub k: usize,
    pub submodularity: RatioValue,
    pub supermodularity: RatioValue,
}

/// `F` tabulated over the whole power set; the backing store for the
/// exhaustive ratio, optimum, and submodularity oracles.
#[derive(Debug, Clone)]
pub struct PowerSetTable {
    m: usize,
    values: Vec<f64>,
}

impl PowerSetTable {
    /// Evaluates every subset once through the counted oracle path
    /// (`2^m` evaluations).
    pub fn build(oracle: &ValueOracle) -> Result<Self> {
        let m = oracle.ground_size();
        if m > RATIO_ENUM_MAX_M {
            return Err(Error::TooLarge(format!(
                "power-set tabulation needs 2^{m} evaluations (limit m <= {RATIO_ENUM_MAX_M})"
            )));
        }
        let values = (0u64..1 << m)
            .map(|mask| oracle.value(&IndexSet::from_mask(mask, m)))
            .collect();
        Ok(Self { m, values })
    }

    pub fn ground_size(&self) -> usize {
        self.m
    }

    pub fn value(&self, set: &IndexSet) -> f64 {
        self.values[set.to_mask() as usize]
    }

    /// Exact maximizer over subsets of size at most `k`, ties to the
    /// lexicographically smallest index list.
    pub fn optimum(&self, k: usize) -> (IndexSet, f64) {
        let mut best_mask = 0u64;
        let mut best_val = self.values[0];
        for mask in 1u64..1 << self.m {
            if (mask.count_ones() as usize) > k {
                continue;
            }
            let val = self.values[mask as usize];
            let better = val > best_val
                || (val == best_val
                    && IndexSet::from_mask(mask, self.m).as_slice()
                        < IndexSet::from_mask(best_mask, self.m).as_slice());
            if better {
                best_val = val;
                best_mask = mask;
            }
        }
        (IndexSet::from_mask(best_mask, self.m), best_val)
    }

    /// Exhaustive submodularity and supermodularity ratios with respect to
    /// the cardinality parameter `k`, per the worst case over all disjoint
    /// pairs `(A, B)` with `|A| <= k`. Pairs whose denominator falls below
    /// `1e-12` are skipped (the defining minimum treats them as +inf).
    pub fn ratio_report(&self, k: usize) -> RatioReport {
        let m = self.m;
        let table = &self.values;
        let full: u64 = (1 << m) - 1;
        let mut sub_min = f64::INFINITY;
        let mut sub_wit: Option<(u64, u64)> = None;
        let mut sup_min = f64::INFINITY;
        let mut sup_wit: Option<(u64, u64)> = None;

        for b in 0u64..1 << m {
            let fb = table[b as usize];
            let comp = full & !b;
            // Submask enumeration over candidates A disjoint from B.
            let mut a = comp;
            while a != 0 {
                if (a.count_ones() as usize) <= k {
                    let set_gain = table[(a | b) as usize] - fb;
                    let mut singleton_sum = 0.0;
                    let mut bits = a;
                    while bits != 0 {
                        let low = bits & bits.wrapping_neg();
                        singleton_sum += table[(b | low) as usize] - fb;
                        bits ^= low;
                    }
                    if set_gain > EPS_ZERO_GAIN {
                        let r = singleton_sum / set_gain;
                        if r < sub_min {
                            sub_min = r;
                            sub_wit = Some((a, b));
                        }
                    }
                    if singleton_sum > EPS_ZERO_GAIN {
                        let r = set_gain / singleton_sum;
                        if r < sup_min {
                            sup_min = r;
                            sup_wit = Some((a, b));
                        }
                    }
                }
                a = (a - 1) & comp;
            }
        }

        let pack = |raw: f64, wit: Option<(u64, u64)>| RatioValue {
            value: raw.min(1.0),
            raw,
            witness: wit.map(|(a, b)| (IndexSet::from_mask(a, m), IndexSet::from_mask(b, m))),
        };
        RatioReport {
            k,
            submodularity: pack(sub_min, sub_wit),
            supermodularity: pack(sup_min, sup_wit),
        }
    }

    /// Largest violation of the first-order diminishing-returns property
    /// over all `A ⊆ B`, `v ∉ B`; a monotone submodular function yields a
    /// value `<= 0` up to roundoff.
    pub fn diminishing_returns_violation(&self) -> f64 {
        let m = self.m;
        let table = &self.values;
        let mut worst = f64::NEG_INFINITY;
        for b in 0u64..1 << m {
            for v in 0..m {
                let bit = 1u64 << v;
                if b & bit != 0 {
                    continue;
                }
                let gain_b = table[(b | bit) as usize] - table[b as usize];
                // All subsets A of B.
                let mut a = b;
                loop {
                    let gain_a = table[(a | bit) as usize] - table[a as usize];
                    worst = worst.max(gain_b - gain_a);
                    if a == 0 {
                        break;
                    }
                    a = (a - 1) & b;
                }
            }
        }
        worst
    }

    /// Largest violation of monotonicity over all `S ⊆ T` pairs.
    pub fn monotonicity_violation(&self) -> f64 {
        let m = self.m;
        let mut worst = f64::NEG_INFINITY;
        for t in 0u64..1 << m {
            let ft = self.values[t as usize];
            for v in 0..m {
                let bit = 1u64 << v;
                if t & bit != 0 {
                    continue;
                }
                worst = worst.max(ft - self.values[(t | bit) as usize]);
            }
        }
        worst
    }
}

/// Exhaustive ratio report: tabulates `F` (costing `2^m` evaluations) and
/// minimizes over all disjoint pairs.
pub fn ratio_report(oracle: &ValueOracle, k: usize) -> Result<RatioReport> {
    Ok(PowerSetTable::build(oracle)?.ratio_report(k))
}

/// Capped submodularity ratio `γ` for cardinality parameter `k`.
pub fn submodularity_ratio(oracle: &ValueOracle, k: usize) -> Result<f64> {
    Ok(ratio_report(oracle, k)?.submodularity.value)
}

/// Capped supermodularity ratio `η` for cardinality parameter `k`.
pub fn supermodularity_ratio(oracle: &ValueOracle, k: usize) -> Result<f64> {
    Ok(ratio_report(oracle, k)?.supermodularity.value)
}

/// Checks the definitional ordering `η_{V,k1} <= η_{V,k2}` for `k1 >= k2`.
pub fn ratio_monotonicity_check(oracle: &ValueOracle, k1: usize, k2: usize) -> Result<bool> {
    if k1 < k2 {
        return Err(Error::InvalidConfig(format!(
            "k1 = {k1} must be at least k2 = {k2}"
        )));
    }
    let table = PowerSetTable::build(oracle)?;
    let eta1 = table.ratio_report(k1).supermodularity.value;
    let eta2 = table.ratio_report(k2).supermodularity.value;
    Ok(eta1 <= eta2 + 1e-12)
}

/// Exhaustive first-order diminishing-returns check; costs `2^m` oracle
/// evaluations.
pub fn diminishing_returns_violation(oracle: &ValueOracle) -> Result<f64> {
    Ok(PowerSetTable::build(oracle)?.diminishing_returns_violation())
}

/// Additive set function `F(S) = Σ_{i∈S} w_i`.
#[derive(Debug, Clone)]
pub struct ModularFunction {
    weights: Vec<f64>,
}

impl ModularFunction {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights }
    }
}

impl SetFunction for ModularFunction {
    fn ground_size(&self) -> usize {
        self.weights.len()
    }

    fn evaluate(&self, set: &IndexSet) -> f64 {
        set.iter().map(|&i| self.weights[i]).sum()
    }
}

/// Weighted coverage `F(S) = Σ_{u ∈ ∪_{i∈S} C_i} w_u`: monotone submodular.
#[derive(Debug, Clone)]
pub struct CoverageFunction {
    sets: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl CoverageFunction {
    pub fn new(sets: Vec<Vec<usize>>, weights: Vec<f64>) -> Self {
        Self { sets, weights }
    }
}

impl SetFunction for CoverageFunction {
    fn ground_size(&self) -> usize {
        self.sets.len()
    }

    fn evaluate(&self, set: &IndexSet) -> f64 {
        let mut covered = vec![false; self.weights.len()];
        for &i in set.iter() {
            for &u in &self.sets[i] {
                covered[u] = true;
            }
        }
        covered
            .iter()
            .zip(&self.weights)
            .filter(|(c, _)| **c)
            .map(|(_, w)| w)
            .sum()
    }
}

/// Set function backed by an explicit table over the power set. Useful for
/// constructing small pathological instances in tests.
#[derive(Debug, Clone)]
pub struct TableFunction {
    m: usize,
    table: Vec<f64>,
}

impl TableFunction {
    pub fn new(m: usize, table: Vec<f64>) -> Result<Self> {
        if table.len() != 1 << m {
            return Err(Error::InvalidConfig(format!(
                "table for m = {m} needs {} entries, got {}",
                1usize << m,
                table.len()
            )));
        }
        Ok(Self { m, table })
    }
}

impl SetFunction for TableFunction {
    fn ground_size(&self) -> usize {
        self.m
    }

    fn evaluate(&self, set: &IndexSet) -> f64 {
        self.table[set.to_mask() as usize]
    }
}
