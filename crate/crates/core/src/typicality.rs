//! Empirical types over finite alphabets.
//!
//! Typicality is the robust (multiplicative) variant: a sequence is
//! ε-strongly typical for `p` when every symbol frequency is within `ε·p(a)`
//! of `p(a)` and no zero-probability symbol occurs. The reported cardinality
//! slack for sequences of length `n` is
//! `ε₂ = ε·H(p) + log2(n + 1)·|support| / n`.
//!
//! Receptions are handled per *unit*: the block received by a node over one
//! base-code use on layered networks, or the single symbol received at one
//! time index under the interleaved schedule. Unit values are interned into
//! dense ids in sorted value order.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsn::{self, DsnError, DsnRunner, NetworkTrace, ProductCode, RelayCode, RxSymbol, TxSymbol};
use crate::topology::RelayNetwork;

/// Largest enumeration attempted by this module.
pub const ENUMERATION_LIMIT: usize = 1 << 22;

#[derive(Debug, Error)]
pub enum TypicalityError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("enumeration too large: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Dsn(#[from] DsnError),
}

pub type Result<T> = std::result::Result<T, TypicalityError>;

/// Probability law on a finite set of distinct symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution<T> {
    support: Vec<T>,
    probs: Vec<f64>,
    index: BTreeMap<T, usize>,
}

impl<T: Ord + Clone> FiniteDistribution<T> {
    pub fn new(pairs: Vec<(T, f64)>) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut support = Vec::with_capacity(pairs.len());
        let mut probs = Vec::with_capacity(pairs.len());
        for (symbol, p) in pairs {
            if !(p.is_finite() && p >= 0.0) {
                return Err(TypicalityError::InvalidDistribution(format!("probability {p}")));
            }
            if index.insert(symbol.clone(), support.len()).is_some() {
                return Err(TypicalityError::InvalidDistribution("repeated symbol".into()));
            }
            support.push(symbol);
            probs.push(p);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(TypicalityError::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(FiniteDistribution { support, probs, index })
    }

    /// Normalized counts, in symbol order.
    pub fn from_counts(counts: &BTreeMap<T, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(TypicalityError::InvalidDistribution("no observations".into()));
        }
        Self::new(counts.iter().map(|(s, &c)| (s.clone(), c as f64 / total as f64)).collect())
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, symbol: &T) -> f64 {
        self.index.get(symbol).map_or(0.0, |&i| self.probs[i])
    }

    /// Number of symbols with positive probability.
    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    pub fn entropy(&self) -> f64 {
        entropy_of(&self.probs)
    }
}

/// Shannon entropy in bits, with `0·log 0 = 0`.
pub fn entropy_of(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()).sum::<f64>()
}

pub fn entropy<T: Ord + Clone>(dist: &FiniteDistribution<T>) -> f64 {
    dist.entropy()
}

fn entropy_of_counts<'a>(counts: impl Iterator<Item = &'a u64>, total: u64) -> f64 {
    let t = total as f64;
    -counts.map(|&c| c as f64 / t).filter(|&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>()
}

/// Joint law of several finite variables, stored as exact counts over
/// tuples of value ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointDistribution {
    variables: Vec<String>,
    counts: BTreeMap<Vec<usize>, u64>,
    total: u64,
}

impl JointDistribution {
    pub fn new(variables: Vec<String>, counts: BTreeMap<Vec<usize>, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(TypicalityError::InvalidDistribution("empty joint table".into()));
        }
        if counts.keys().any(|k| k.len() != variables.len()) {
            return Err(TypicalityError::InvalidDistribution("tuple arity mismatch".into()));
        }
        Ok(JointDistribution { variables, counts, total })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn counts(&self) -> &BTreeMap<Vec<usize>, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn prob(&self, tuple: &[usize]) -> f64 {
        self.counts.get(tuple).map_or(0.0, |&c| c as f64 / self.total as f64)
    }

    /// Joint law of the listed variables, in the listed order.
    pub fn marginal(&self, vars: &[usize]) -> JointDistribution {
        let mut counts = BTreeMap::new();
        for (tuple, &c) in &self.counts {
            *counts.entry(vars.iter().map(|&v| tuple[v]).collect()).or_insert(0) += c;
        }
        JointDistribution {
            variables: vars.iter().map(|&v| self.variables[v].clone()).collect(),
            counts,
            total: self.total,
        }
    }

    /// Law of a single variable over its value ids.
    pub fn distribution(&self, var: usize) -> FiniteDistribution<usize> {
        let counts: BTreeMap<usize, u64> =
            self.marginal(&[var]).counts.into_iter().map(|(k, c)| (k[0], c)).collect();
        FiniteDistribution::from_counts(&counts).expect("marginal of a valid joint law")
    }

    pub fn tuple_distribution(&self) -> FiniteDistribution<Vec<usize>> {
        FiniteDistribution::from_counts(&self.counts).expect("valid joint law")
    }

    pub fn entropy(&self) -> f64 {
        entropy_of_counts(self.counts.values(), self.total)
    }

    pub fn entropy_of(&self, vars: &[usize]) -> f64 {
        self.marginal(vars).entropy()
    }

    /// `H(target | given)`, summed group by group so that a deterministic
    /// relation gives exactly zero.
    pub fn conditional_entropy(&self, target: &[usize], given: &[usize]) -> f64 {
        let mut groups: BTreeMap<Vec<usize>, BTreeMap<Vec<usize>, u64>> = BTreeMap::new();
        for (tuple, &c) in &self.counts {
            let g = given.iter().map(|&v| tuple[v]).collect();
            let t = target.iter().map(|&v| tuple[v]).collect();
            *groups.entry(g).or_default().entry(t).or_insert(0) += c;
        }
        groups
            .values()
            .map(|inner| {
                let n: u64 = inner.values().sum();
                n as f64 / self.total as f64 * entropy_of_counts(inner.values(), n)
            })
            .sum()
    }
}

/// Robust strong typicality of `seq` with respect to `dist`.
pub fn is_strongly_typical<T: Ord + Clone>(seq: &[T], dist: &FiniteDistribution<T>, epsilon: f64) -> bool {
    if seq.is_empty() {
        return false;
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for s in seq {
        *counts.entry(s).or_insert(0) += 1;
    }
    if counts.keys().any(|s| dist.prob(s) == 0.0) {
        return false;
    }
    let len = seq.len() as f64;
    dist.support.iter().zip(&dist.probs).all(|(a, &p)| {
        let freq = counts.get(a).copied().unwrap_or(0) as f64 / len;
        frequency_ok(freq, p, epsilon)
    })
}

fn frequency_ok(freq: f64, p: f64, epsilon: f64) -> bool {
    if p == 0.0 {
        return freq == 0.0;
    }
    (freq - p).abs() <= epsilon * p + 4.0 * f64::EPSILON * p.max(freq)
}

/// Strong typicality of the tuple sequence `seqs[var][t]` against `joint`.
pub fn jointly_strongly_typical(seqs: &[Vec<usize>], joint: &JointDistribution, epsilon: f64) -> bool {
    if seqs.len() != joint.variables.len() {
        return false;
    }
    let len = seqs.first().map_or(0, Vec::len);
    if seqs.iter().any(|s| s.len() != len) {
        return false;
    }
    let tuples: Vec<Vec<usize>> = (0..len).map(|t| seqs.iter().map(|s| s[t]).collect()).collect();
    is_strongly_typical(&tuples, &joint.tuple_distribution(), epsilon)
}

/// Cardinality slack `ε₂` for length-`len` sequences.
pub fn epsilon2<T: Ord + Clone>(dist: &FiniteDistribution<T>, epsilon: f64, len: usize) -> f64 {
    let n = len.max(1) as f64;
    epsilon * dist.entropy() + (n + 1.0).log2() * dist.support_size() as f64 / n
}

/// Where a reception is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReceptionUnit {
    pub node: usize,
    /// Time index within the base block for interleaved units; `None` for a
    /// whole block.
    pub time: Option<usize>,
}

impl std::fmt::Display for ReceptionUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.time {
            Some(t) => write!(f, "node {} t={}", self.node, t + 1),
            None => write!(f, "node {}", self.node),
        }
    }
}

/// Exact law induced by a code under uniform messages.
///
/// Variable 0 is the source codeword; variable `u + 1` is reception unit `u`.
#[derive(Debug, Clone)]
pub struct InducedDistribution {
    layered: bool,
    block_length: usize,
    units: Vec<ReceptionUnit>,
    joint: JointDistribution,
    codewords: Vec<Vec<TxSymbol>>,
    values: Vec<Vec<Vec<RxSymbol>>>,
    rows: Vec<Vec<usize>>,
    traces: Vec<NetworkTrace>,
}

fn intern<V: Ord + Clone>(items: &[V]) -> (Vec<V>, Vec<usize>) {
    let set: BTreeSet<V> = items.iter().cloned().collect();
    let values: Vec<V> = set.into_iter().collect();
    let ids = items.iter().map(|v| values.binary_search(v).expect("interned")).collect();
    (values, ids)
}

/// Runs every codeword of `code` and tabulates the joint law of the source
/// codeword and all receptions.
pub fn induced_distribution(net: &RelayNetwork, code: &RelayCode) -> Result<InducedDistribution> {
    if code.len() > ENUMERATION_LIMIT {
        return Err(TypicalityError::TooLarge(format!("{} codewords", code.len())));
    }
    let runner = DsnRunner::new(net, code)?;
    let layered = runner.schedule().is_layered();
    let traces = runner.run_all();
    let n = code.block_length();
    let units: Vec<ReceptionUnit> = if layered {
        (1..net.node_count()).map(|node| ReceptionUnit { node, time: None }).collect()
    } else {
        (1..net.node_count())
            .flat_map(|node| (0..n).map(move |t| ReceptionUnit { node, time: Some(t) }))
            .collect()
    };
    let (codewords, x_ids) = intern(code.codebook());
    let mut values = Vec::with_capacity(units.len());
    let mut columns = vec![x_ids];
    for unit in &units {
        let observed: Vec<Vec<RxSymbol>> = traces
            .iter()
            .map(|trace| match unit.time {
                None => trace.received[unit.node].clone(),
                Some(t) => vec![trace.received[unit.node][t].clone()],
            })
            .collect();
        let (vals, ids) = intern(&observed);
        values.push(vals);
        columns.push(ids);
    }
    let rows: Vec<Vec<usize>> = (0..code.len()).map(|m| columns.iter().map(|c| c[m]).collect()).collect();
    let mut counts = BTreeMap::new();
    for row in &rows {
        *counts.entry(row.clone()).or_insert(0u64) += 1;
    }
    let variables = std::iter::once("X0".to_string())
        .chain(units.iter().map(|u| match u.time {
            None => format!("Y'{}", u.node),
            Some(t) => format!("Y'{}({})", u.node, t + 1),
        }))
        .collect();
    let joint = JointDistribution::new(variables, counts)?;
    Ok(InducedDistribution { layered, block_length: n, units, joint, codewords, values, rows, traces })
}

impl InducedDistribution {
    pub fn is_layered(&self) -> bool {
        self.layered
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn units(&self) -> &[ReceptionUnit] {
        &self.units
    }

    pub fn unit_index(&self, unit: ReceptionUnit) -> Option<usize> {
        self.units.iter().position(|&u| u == unit)
    }

    /// Units of one node, in time order.
    pub fn units_of(&self, node: usize) -> Vec<usize> {
        (0..self.units.len()).filter(|&u| self.units[u].node == node).collect()
    }

    pub fn joint(&self) -> &JointDistribution {
        &self.joint
    }

    /// Law of reception unit `u` over its value ids.
    pub fn unit_distribution(&self, u: usize) -> FiniteDistribution<usize> {
        self.joint.distribution(u + 1)
    }

    pub fn source_distribution(&self) -> FiniteDistribution<usize> {
        self.joint.distribution(0)
    }

    /// Value table of unit `u`: id → received symbols (a block, or one symbol).
    pub fn unit_values(&self, u: usize) -> &[Vec<RxSymbol>] {
        &self.values[u]
    }

    pub fn codeword_values(&self) -> &[Vec<TxSymbol>] {
        &self.codewords
    }

    /// Variable ids `[x, unit_0, unit_1, ...]` for base message `m`.
    pub fn row(&self, message: usize) -> &[usize] {
        &self.rows[message]
    }

    pub fn traces(&self) -> &[NetworkTrace] {
        &self.traces
    }

    /// Unit value ids of a product codeword, one per repetition.
    pub fn reception_ids(&self, digits: &[usize], u: usize) -> Vec<usize> {
        digits.iter().map(|&m| self.rows[m][u + 1]).collect()
    }

    /// Full tuple sequence `seqs[var][r]` of a product codeword.
    pub fn tuple_sequences(&self, digits: &[usize]) -> Vec<Vec<usize>> {
        (0..=self.units.len()).map(|v| digits.iter().map(|&m| self.rows[m][v]).collect()).collect()
    }
}

/// Typical reception sequences of one unit, as sequences of unit value ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TypicalSet {
    pub unit: ReceptionUnit,
    pub epsilon: f64,
    pub epsilon2: f64,
    /// Entropy of the unit's per-use law.
    pub entropy: f64,
    /// Sequence length (number of base-code uses).
    pub length: usize,
    alphabet: Vec<Vec<RxSymbol>>,
    members: Vec<Vec<usize>>,
}

impl TypicalSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members in lexicographic order.
    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn alphabet(&self) -> &[Vec<RxSymbol>] {
        &self.alphabet
    }

    pub fn position(&self, ids: &[usize]) -> Option<usize> {
        self.members.binary_search_by(|m| m.as_slice().cmp(ids)).ok()
    }

    pub fn contains(&self, ids: &[usize]) -> bool {
        self.position(ids).is_some()
    }

    /// Member `i` as its reception symbols, in use order.
    pub fn vector(&self, i: usize) -> Vec<RxSymbol> {
        self.members[i].iter().flat_map(|&a| self.alphabet[a].iter().cloned()).collect()
    }

    /// `log2` of the cardinality envelope `2^{n(H ± ε₂)}`.
    pub fn envelope_log2(&self) -> (f64, f64) {
        let n = self.length as f64;
        (n * (self.entropy - self.epsilon2), n * (self.entropy + self.epsilon2))
    }

    pub fn within_envelope(&self) -> bool {
        let (lo, hi) = self.envelope_log2();
        let size = (self.len() as f64).log2();
        !self.is_empty() && lo <= size && size <= hi
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc {
            unit: ReceptionUnit,
            epsilon: f64,
            epsilon2: f64,
            entropy: f64,
            length: usize,
            vectors: Vec<Vec<Vec<[i64; 2]>>>,
        }
        let vectors = (0..self.len())
            .map(|i| self.vector(i).iter().map(|y| y.iter().map(|g| [g.re, g.im]).collect()).collect())
            .collect();
        let doc = Doc {
            unit: self.unit,
            epsilon: self.epsilon,
            epsilon2: self.epsilon2,
            entropy: self.entropy,
            length: self.length,
            vectors,
        };
        serde_json::to_string(&doc).expect("typical set serializes")
    }
}

/// Strongly typical reception sequences of length `n_rep` at unit `u`.
///
/// Because the product code contains every combination of base messages,
/// the receptions over all its codewords are exactly the sequences over the
/// unit's support; those are enumerated and filtered.
pub fn enumerate_typical_receptions(
    induced: &InducedDistribution,
    u: usize,
    n_rep: usize,
    epsilon: f64,
) -> Result<TypicalSet> {
    let dist = induced.unit_distribution(u);
    let support: Vec<usize> = dist
        .support()
        .iter()
        .zip(dist.probs())
        .filter(|(_, &p)| p > 0.0)
        .map(|(&a, _)| a)
        .collect();
    let total = (support.len() as f64).powi(n_rep as i32);
    if total > ENUMERATION_LIMIT as f64 {
        return Err(TypicalityError::TooLarge(format!("{total} reception sequences")));
    }
    let total = total as usize;
    let members: Vec<Vec<usize>> = (0..total)
        .into_par_iter()
        .filter_map(|mut code| {
            let mut seq = vec![0; n_rep];
            for slot in seq.iter_mut().rev() {
                *slot = support[code % support.len()];
                code /= support.len();
            }
            is_strongly_typical(&seq, &dist, epsilon).then_some(seq)
        })
        .collect();
    Ok(TypicalSet {
        unit: induced.units[u],
        epsilon,
        epsilon2: epsilon2(&dist, epsilon, n_rep),
        entropy: dist.entropy(),
        length: n_rep,
        alphabet: induced.values[u].clone(),
        members,
    })
}

/// Reception sequence (as unit value ids) of product codeword `index` at
/// every unit, read off an actual execution of the product code.
pub fn observed_reception_ids(
    induced: &InducedDistribution,
    trace: &dsn::ProductTrace,
) -> Vec<Vec<usize>> {
    let n = induced.block_length;
    induced
        .units
        .iter()
        .enumerate()
        .map(|(u, unit)| {
            trace.received[unit.node]
                .chunks(n)
                .map(|block| {
                    let value: Vec<RxSymbol> = match unit.time {
                        None => block.to_vec(),
                        Some(t) => vec![block[t].clone()],
                    };
                    induced.values[u].binary_search(&value).expect("reception seen in base law")
                })
                .collect()
        })
        .collect()
}

/// For every unit, the map from each reception sequence to the product
/// codewords producing it, obtained by executing every product codeword.
pub fn preimage_partitions(
    net: &RelayNetwork,
    product: &ProductCode,
    induced: &InducedDistribution,
) -> Result<Vec<BTreeMap<Vec<usize>, Vec<usize>>>> {
    if product.len() > ENUMERATION_LIMIT {
        return Err(TypicalityError::TooLarge(format!("{} product codewords", product.len())));
    }
    let runner = DsnRunner::new(net, product.base())?;
    let observed: Vec<Vec<Vec<usize>>> = (0..product.len())
        .into_par_iter()
        .map(|i| {
            dsn::run_product_with(&runner, product, i).map(|trace| observed_reception_ids(induced, &trace))
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut partitions = vec![BTreeMap::<Vec<usize>, Vec<usize>>::new(); induced.units.len()];
    for (i, per_unit) in observed.into_iter().enumerate() {
        for (u, ids) in per_unit.into_iter().enumerate() {
            partitions[u].entry(ids).or_default().push(i);
        }
    }
    Ok(partitions)
}
