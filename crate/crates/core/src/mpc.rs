//! Simulated MPC cluster.
//!
//! Machines hold `max(16, ⌈n^σ⌉)` words. Work is executed sequentially (or
//! thread-parallel inside a round) but every communication step is packed
//! onto simulated machines and charged to a [`RoundLedger`]:
//!
//! | primitive                  | rounds |
//! |----------------------------|--------|
//! | sort / redistribute        | 1      |
//! | group aggregate            | 3      |
//! | one 1-hop exchange         | 1      |
//! | spanner build (all scales) | 2      |

use std::collections::BTreeMap;

use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, Serialize)]
pub struct ClusterConfig {
    pub n: usize,
    /// Per-machine memory exponent σ ∈ (0, 1).
    pub sigma: f64,
    /// Global memory is `budget_slack · n^{1+ε}` words.
    pub global_budget_epsilon: f64,
    pub word_bits: u32,
    /// Polylogarithmic headroom for the parallel sketch repetitions.
    pub budget_slack: f64,
}

impl ClusterConfig {
    pub fn new(n: usize, sigma: f64, global_budget_epsilon: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(Error::input(format!("σ must lie in (0, 1), got {sigma}")));
        }
        if !(global_budget_epsilon > 0.0 && global_budget_epsilon <= 1.0) {
            return Err(Error::input(format!("ε must lie in (0, 1], got {global_budget_epsilon}")));
        }
        let log = (n.max(2) as f64).log2().ceil();
        Ok(Self { n, sigma, global_budget_epsilon, word_bits: 64, budget_slack: 64.0 * log * log })
    }

    pub fn machine_capacity(&self) -> usize {
        ((self.n.max(1) as f64).powf(self.sigma).ceil() as usize).max(16)
    }

    pub fn global_budget_words(&self) -> usize {
        (self.budget_slack * (self.n.max(2) as f64).powf(1.0 + self.global_budget_epsilon)).ceil() as usize
    }

    /// Largest `l` accepted by [`khop_min_l`]: `⌈n^{σ/2}⌉`.
    pub fn max_l(&self) -> usize {
        (self.n.max(1) as f64).powf(self.sigma / 2.0).ceil() as usize
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RoundLedger {
    pub rounds_by_phase: BTreeMap<String, u64>,
    pub peak_machine_words: usize,
    /// Peak words resident across all machines during one step.
    pub global_words: usize,
    pub messages_sent: u64,
    /// Number of machines needed at the peak step.
    pub peak_machines: usize,
}

impl RoundLedger {
    pub fn total_rounds(&self) -> u64 {
        self.rounds_by_phase.values().sum()
    }

    /// Combine a ledger of work that ran after this one.
    pub fn merge_sequential(&mut self, other: &RoundLedger) {
        for (k, v) in &other.rounds_by_phase {
            *self.rounds_by_phase.entry(k.clone()).or_default() += v;
        }
        self.absorb_memory(other);
    }

    /// Combine a ledger of work that ran in parallel with this one: rounds
    /// overlap, memory adds up.
    pub fn merge_parallel(&mut self, other: &RoundLedger) {
        for (k, v) in &other.rounds_by_phase {
            let e = self.rounds_by_phase.entry(k.clone()).or_default();
            *e = (*e).max(*v);
        }
        self.peak_machine_words = self.peak_machine_words.max(other.peak_machine_words);
        self.global_words += other.global_words;
        self.peak_machines += other.peak_machines;
        self.messages_sent += other.messages_sent;
    }

    fn absorb_memory(&mut self, other: &RoundLedger) {
        self.peak_machine_words = self.peak_machine_words.max(other.peak_machine_words);
        self.global_words = self.global_words.max(other.global_words);
        self.peak_machines = self.peak_machines.max(other.peak_machines);
        self.messages_sent += other.messages_sent;
    }
}

/// Simulated cluster: configuration, current phase and ledger.
#[derive(Clone, Debug)]
pub struct Cluster {
    config: ClusterConfig,
    ledger: RoundLedger,
    phase: String,
}

impl Cluster {
    pub fn new(config: ClusterConfig) -> Self {
        Self { config, ledger: RoundLedger::default(), phase: "setup".into() }
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn ledger(&self) -> &RoundLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> RoundLedger {
        self.ledger
    }

    pub fn set_phase(&mut self, name: &str) {
        self.phase = name.to_string();
        self.ledger.rounds_by_phase.entry(self.phase.clone()).or_default();
    }

    pub fn phase(&self) -> &str {
        &self.phase
    }

    pub fn charge(&mut self, rounds: u64) {
        *self.ledger.rounds_by_phase.entry(self.phase.clone()).or_default() += rounds;
    }

    /// Account for `records` items of `record_words` words each resident on
    /// the cluster. Records are packed greedily; a record larger than a
    /// machine or a total above the global budget is an accounting error.
    pub fn hold(&mut self, records: usize, record_words: usize) -> Result<()> {
        let cap = self.config.machine_capacity();
        if records == 0 {
            return Ok(());
        }
        if record_words > cap {
            return Err(Error::Accounting(format!(
                "{}: record of {record_words} words exceeds machine capacity {cap}",
                self.phase
            )));
        }
        let total = records.saturating_mul(record_words);
        let budget = self.config.global_budget_words();
        if total > budget {
            return Err(Error::Accounting(format!(
                "{}: {total} words exceed the global budget of {budget}",
                self.phase
            )));
        }
        let per_machine = (cap / record_words) * record_words;
        self.ledger.peak_machine_words = self.ledger.peak_machine_words.max(per_machine.min(total));
        self.ledger.global_words = self.ledger.global_words.max(total);
        self.ledger.peak_machines = self.ledger.peak_machines.max(total.div_ceil(per_machine));
        Ok(())
    }

    /// One synchronous round in which `records` messages of `record_words`
    /// words are delivered.
    pub fn exchange(&mut self, records: usize, record_words: usize) -> Result<()> {
        self.hold(records, record_words)?;
        self.ledger.messages_sent += records as u64;
        self.charge(1);
        Ok(())
    }
}

/// Size of a payload in 64-bit words.
pub trait Words {
    fn words(&self) -> usize;
}

macro_rules! one_word {
    ($($t:ty),*) => { $(impl Words for $t { fn words(&self) -> usize { 1 } })* };
}
one_word!(f64, u64, i64, usize, u32);

impl<A: Words, B: Words> Words for (A, B) {
    fn words(&self) -> usize {
        self.0.words() + self.1.words()
    }
}

impl<A: Words, B: Words, C: Words> Words for (A, B, C) {
    fn words(&self) -> usize {
        self.0.words() + self.1.words() + self.2.words()
    }
}

impl<T: Words> Words for Vec<T> {
    fn words(&self) -> usize {
        self.iter().map(Words::words).sum()
    }
}

/// Records `(key, payload)` placed contiguously on machines.
#[derive(Clone, Debug)]
pub struct KeyedRecords<T> {
    records: Vec<(u64, T)>,
    placement: Vec<usize>,
}

fn place<T: Words>(cap: usize, records: &[(u64, T)]) -> Result<Vec<usize>> {
    let mut placement = Vec::with_capacity(records.len());
    let mut machine = 0;
    let mut used = 0;
    for (key, payload) in records {
        let w = 1 + payload.words();
        if w > cap {
            return Err(Error::Accounting(format!("record with key {key} needs {w} words, capacity is {cap}")));
        }
        if used + w > cap {
            machine += 1;
            used = 0;
        }
        used += w;
        placement.push(machine);
    }
    Ok(placement)
}

impl<T: Words> KeyedRecords<T> {
    pub fn new(cluster: &mut Cluster, records: Vec<(u64, T)>) -> Result<Self> {
        let placement = place(cluster.config.machine_capacity(), &records)?;
        let words: usize = records.iter().map(|(_, p)| 1 + p.words()).sum();
        cluster.hold(words, 1)?;
        Ok(Self { records, placement })
    }

    pub fn records(&self) -> &[(u64, T)] {
        &self.records
    }

    pub fn placement(&self) -> &[usize] {
        &self.placement
    }

    pub fn machines(&self) -> usize {
        self.placement.last().map_or(0, |m| m + 1)
    }

    /// Words held by each machine.
    pub fn machine_loads(&self) -> Vec<usize> {
        let mut loads = vec![0; self.machines()];
        for ((_, p), &m) in self.records.iter().zip(&self.placement) {
            loads[m] += 1 + p.words();
        }
        loads
    }

    pub fn into_records(self) -> Vec<(u64, T)> {
        self.records
    }
}

/// Stable sort by key and re-pack contiguously. One round.
pub fn sorted_redistribute<T: Words>(cluster: &mut Cluster, data: KeyedRecords<T>) -> Result<KeyedRecords<T>> {
    let mut records = data.records;
    records.sort_by_key(|(k, _)| *k);
    let placement = place(cluster.config.machine_capacity(), &records)?;
    let words: usize = records.iter().map(|(_, p)| 1 + p.words()).sum();
    cluster.hold(words, 1)?;
    cluster.ledger.messages_sent += records.len() as u64;
    cluster.charge(1);
    Ok(KeyedRecords { records, placement })
}

/// Aggregate payloads per key with an associative, commutative `combine`.
/// Returns, aligned with the input records, the aggregate of each record's
/// key. The fold runs in (key, input position) order so floating-point
/// results are reproducible. Three rounds: sort, tree up, tree down.
pub fn group_aggregate<T, F>(cluster: &mut Cluster, data: &KeyedRecords<T>, combine: F) -> Result<Vec<T>>
where
    T: Words + Clone,
    F: Fn(&T, &T) -> T,
{
    let tagged: Vec<(u64, (usize, T))> =
        data.records.iter().enumerate().map(|(i, (k, p))| (*k, (i, p.clone()))).collect();
    let sorted = sorted_redistribute(cluster, KeyedRecords { placement: Vec::new(), records: tagged })?;
    let mut out: Vec<Option<T>> = vec![None; data.records.len()];
    let recs = sorted.records();
    let mut start = 0;
    while start < recs.len() {
        let key = recs[start].0;
        let mut end = start;
        let mut acc = recs[start].1 .1.clone();
        while end + 1 < recs.len() && recs[end + 1].0 == key {
            end += 1;
            acc = combine(&acc, &recs[end].1 .1);
        }
        for r in &recs[start..=end] {
            out[r.1 .0] = Some(acc.clone());
        }
        start = end + 1;
    }
    let n = recs.len() as u64;
    cluster.ledger.messages_sent += 2 * n;
    cluster.charge(2);
    Ok(out.into_iter().map(|x| x.expect("every record belongs to a group")).collect())
}

fn min_l<E: Ord + Clone>(mut items: Vec<E>, l: usize) -> Vec<E> {
    items.sort();
    items.dedup();
    items.truncate(l);
    items
}

/// The `l` smallest elements over each node's `t`-hop neighbourhood
/// (inclusive), by `t` iterations of the 1-hop recurrence.
pub fn khop_min_l<E>(cluster: &mut Cluster, adj: &[Vec<usize>], inputs: &[Vec<E>], l: usize, t: usize) -> Result<Vec<Vec<E>>>
where
    E: Ord + Clone + Words + Send + Sync,
{
    use rayon::prelude::*;
    let max_l = cluster.config.max_l();
    if l == 0 || l > max_l {
        return Err(Error::input(format!("l = {l} outside [1, {max_l}]")));
    }
    if adj.len() != inputs.len() {
        return Err(Error::input("adjacency and inputs differ in length"));
    }
    let mut cur: Vec<Vec<E>> = inputs.iter().map(|a| min_l(a.clone(), l)).collect();
    let edges: usize = adj.iter().map(Vec::len).sum();
    let elem_words = inputs.iter().flatten().map(Words::words).max().unwrap_or(1);
    for _ in 0..t {
        cluster.exchange(edges, 1 + l * elem_words)?;
        cur = (0..adj.len())
            .into_par_iter()
            .map(|u| {
                let mut pool = cur[u].clone();
                for &v in &adj[u] {
                    pool.extend(cur[v].iter().cloned());
                }
                min_l(pool, l)
            })
            .collect();
    }
    Ok(cur)
}

/// Exponential-minimum sum sketch.
///
/// For nonnegative weights `x_v`, each repetition draws `E_v ~ Exp(1)/x_v`;
/// the minimum over a set is exponential with rate `Σ x_v`. Repetitions are
/// split into groups; each group gives the unbiased estimate `(m-1)/Σ min`,
/// the median over groups is taken and shifted up by `1 + ε/2` so the
/// result lands in `[X, (1+ε)X]` with high probability.
#[derive(Clone, Debug)]
pub struct SumSketch {
    pub epsilon: f64,
    pub groups: usize,
    pub per_group: usize,
}

impl SumSketch {
    pub const GROUPS: usize = 3;
    /// Additive term in the per-group repetition count, set by calibration.
    pub const CONFIDENCE: f64 = 20.0;

    pub fn new(n: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.01) || !epsilon.is_finite() {
            return Err(Error::input(format!("sketch ε must be at least 0.01, got {epsilon}")));
        }
        let margin = (epsilon / 2.0) / (1.0 + epsilon / 2.0);
        let z2 = 2.0 * (n.max(2) as f64).ln() + Self::CONFIDENCE;
        let per_group = (z2 / (margin * margin)).ceil() as usize;
        Ok(Self { epsilon, groups: Self::GROUPS, per_group: per_group.max(2) })
    }

    pub fn reps(&self) -> usize {
        self.groups * self.per_group
    }

    /// Draws `Exp(1)/weight` for every repetition; infinite for weight 0.
    pub fn draws(&self, seed: u64, node: usize, weight: f64) -> Vec<f64> {
        if weight <= 0.0 {
            return vec![f64::INFINITY; self.reps()];
        }
        let mut rng = rng::keyed_rng(seed, &[rng::tag::SKETCH, node as u64]);
        (0..self.reps())
            .map(|_| {
                let e: f64 = Exp1.sample(&mut rng);
                e / weight
            })
            .collect()
    }

    pub fn estimate(&self, mins: &[f64]) -> f64 {
        debug_assert_eq!(mins.len(), self.reps());
        let mut ests: Vec<f64> = mins
            .chunks_exact(self.per_group)
            .map(|g| {
                let s: f64 = g.iter().sum();
                if s.is_finite() {
                    (self.per_group as f64 - 1.0) / s
                } else {
                    0.0
                }
            })
            .collect();
        ests.sort_by(f64::total_cmp);
        ests[ests.len() / 2] * (1.0 + self.epsilon / 2.0)
    }
}

/// Estimates of `Σ_{v ∈ N^t(u)} x_v` for every node `u`. Repetitions run as
/// parallel instances of the 1-hop minimum, so the charge is `t` rounds
/// with memory multiplied by the repetition count.
pub fn khop_approx_sum(
    cluster: &mut Cluster,
    adj: &[Vec<usize>],
    values: &[f64],
    t: usize,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    if adj.len() != values.len() {
        return Err(Error::input("adjacency and values differ in length"));
    }
    if let Some(bad) = values.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::input(format!("value at node {bad} is not a finite nonnegative real")));
    }
    let sketch = SumSketch::new(adj.len(), epsilon)?;
    let reps = sketch.reps();
    let mut cur: Vec<Vec<f64>> = values.iter().enumerate().map(|(u, &x)| sketch.draws(seed, u, x)).collect();
    cluster.hold(adj.len() * reps, 1)?;
    let edges: usize = adj.iter().map(Vec::len).sum();
    for _ in 0..t {
        cluster.exchange(edges * reps, 2)?;
        cur = (0..adj.len())
            .into_par_iter()
            .map(|u| {
                let mut m = cur[u].clone();
                for &v in &adj[u] {
                    for (a, b) in m.iter_mut().zip(&cur[v]) {
                        *a = a.min(*b);
                    }
                }
                m
            })
            .collect();
    }
    Ok(cur.iter().map(|m| sketch.estimate(m)).collect())
}
