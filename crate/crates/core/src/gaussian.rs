//! Operating a lifted code over the Gaussian network, and Monte Carlo checks
//! of the entropy terms that bound what the noisy network loses.
//!
//! Noise is `CN(0, 1)`: real and imaginary parts are independent `N(0, 1/2)`.
//! Each node decodes its noisy block to a member of its pruned set by
//! maximum likelihood over the Gaussian means that can produce each
//! candidate (the means are exact: they follow from the deterministic
//! network), then re-encodes with the relay map of the base code.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{self, DiscreteSymbol, GaussianInteger, GaussianSymbol, LinkGain};
use crate::dsn::{DsnError, DsnRunner, ProductCode, RelayCode, RxSymbol, Schedule, TxSymbol};
use crate::estimate::{self, EntropyEstimate, BOOTSTRAP_RESAMPLES};
use crate::lifting::{self, LiftedCode, PrunedUnit};
use crate::seed;
use crate::topology::{AntennaMode, RelayNetwork};
use crate::typicality::{InducedDistribution, ReceptionUnit};

/// Format tag of simulation and bound reports.
pub const REPORT_FORMAT: u32 = 1;

/// Mass left outside the enumerated cells of the Gaussian cell law.
const CELL_TAIL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GaussianError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Dsn(#[from] DsnError),
}

pub type Result<T> = std::result::Result<T, GaussianError>;

/// Receiver noise. `scale` multiplies the standard deviation and exists for
/// debugging; the model value is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub seed: u64,
    pub scale: f64,
}

impl NoiseSpec {
    pub fn new(seed: u64) -> Self {
        NoiseSpec { seed, scale: 1.0 }
    }

    pub fn with_scale(self, scale: f64) -> Self {
        NoiseSpec { scale, ..self }
    }

    /// Variance per complex dimension.
    pub fn variance(&self) -> f64 {
        self.scale * self.scale
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GaussianSymbol {
        let sd = self.scale * std::f64::consts::FRAC_1_SQRT_2;
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        GaussianSymbol::new(sd * re, sd * im)
    }
}

/// `P(floor(Z) = k)` for `Z ~ N(0, 1/2)`, i.e. `Φ((k+1)√2) − Φ(k√2)`, over
/// the cells needed to leave less than `1e-12` of mass outside.
pub fn gaussian_cell_probabilities() -> Vec<(i64, f64)> {
    // Φ(k√2) = erfc(−k)/2; the upper half is evaluated in the tail form.
    let upper = |k: i64| 0.5 * (libm::erfc(k as f64) - libm::erfc(k as f64 + 1.0));
    let mut k_max = 0;
    while libm::erfc(k_max as f64 + 1.0) >= CELL_TAIL {
        k_max += 1;
    }
    let mut cells: Vec<(i64, f64)> = (0..=k_max).map(|k| (-k - 1, upper(k))).collect();
    cells.reverse();
    cells.extend((0..=k_max).map(|k| (k, upper(k))));
    cells
}

/// Entropy (bits) of `floor(Z_R)`, `Z_R ~ N(0, 1/2)`.
pub fn exact_gaussian_cell_entropy() -> f64 {
    -gaussian_cell_probabilities().iter().map(|&(_, p)| p * p.log2()).sum::<f64>()
}

/// Decoding rule at a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecodeMethod {
    /// Closest candidate; ties go to the lowest index.
    Ml,
    /// The unique candidate whose per-symbol log-likelihood is at least
    /// `−(log2(πeσ²) + slack)` bits.
    Threshold { slack: f64 },
}

impl DecodeMethod {
    pub const DEFAULT_THRESHOLD_SLACK: f64 = 0.5;
}

/// One decoding hypothesis: a deterministic reception and the noiseless
/// Gaussian receptions that can accompany it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub reception: Vec<GaussianInteger>,
    /// Possible means, each of the same length as `reception`; empty when
    /// unknown.
    pub means: Vec<Vec<GaussianSymbol>>,
}

fn sq_dist(y: &[GaussianSymbol], mu: &[GaussianSymbol]) -> f64 {
    y.iter().zip(mu).map(|(&a, &b)| (a - b).norm_sqr()).sum()
}

/// Squared distance from `y` to the box `y' ± 3K` allowed by the bounded
/// perturbation.
fn box_cost(y: &[GaussianSymbol], reception: &[GaussianInteger], links: usize) -> f64 {
    let half = 3.0 * links as f64;
    let excess = |d: f64| (d.abs() - half).max(0.0);
    y.iter()
        .zip(reception)
        .map(|(a, r)| {
            let dr = excess(a.re - r.re as f64);
            let di = excess(a.im - r.im as f64);
            dr * dr + di * di
        })
        .sum()
}

fn candidate_cost(y: &[GaussianSymbol], c: &Candidate, links: usize) -> f64 {
    if c.means.is_empty() {
        box_cost(y, &c.reception, links)
    } else {
        c.means.iter().map(|mu| sq_dist(y, mu)).fold(f64::INFINITY, f64::min)
    }
}

/// Picks a candidate from its squared-distance cost; `symbols` complex
/// symbols per candidate, noise variance `variance`.
fn select(costs: impl Iterator<Item = f64>, method: DecodeMethod, symbols: usize, variance: f64) -> Option<usize> {
    match method {
        DecodeMethod::Ml => {
            let mut best: Option<(usize, f64)> = None;
            for (i, c) in costs.enumerate() {
                if best.is_none_or(|(_, b)| c < b) {
                    best = Some((i, c));
                }
            }
            best.map(|(i, _)| i)
        }
        DecodeMethod::Threshold { slack } => {
            // LL = −log2(πσ²) − cost/(Sσ² ln2) ≥ −(log2(πeσ²) + slack)
            let limit = symbols as f64 * variance * (1.0 + slack * std::f64::consts::LN_2);
            let mut passing = costs.enumerate().filter(|&(_, c)| c <= limit).map(|(i, _)| i);
            let first = passing.next();
            if passing.next().is_some() {
                None
            } else {
                first
            }
        }
    }
}

/// Decodes a noisy sequence to one of `candidates` (`None` on failure).
/// `links` is the receiver in-degree, used when a candidate has no means.
pub fn decode_to_set(
    y: &[GaussianSymbol],
    candidates: &[Candidate],
    links: usize,
    method: DecodeMethod,
    variance: f64,
) -> Option<usize> {
    select(candidates.iter().map(|c| candidate_cost(y, c, links)), method, y.len(), variance)
}

/// Everything needed to operate a lifted code.
#[derive(Debug, Clone, Copy)]
pub struct LiftedSystem<'a> {
    pub net: &'a RelayNetwork,
    pub code: &'a RelayCode,
    pub induced: &'a InducedDistribution,
    pub product: &'a ProductCode,
    pub lifted: &'a LiftedCode,
}

/// Outcome counts of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub format: u32,
    pub seed: u64,
    pub noise_scale: f64,
    pub method: DecodeMethod,
    pub n_rep: usize,
    pub block_length: usize,
    pub codewords: usize,
    pub trials: u64,
    pub message_errors: u64,
    pub decode_failures: u64,
    pub unit_errors: Vec<UnitErrors>,
    /// Mean `|x|²` per transmitted symbol and antenna, per node.
    pub average_power: Vec<f64>,
    pub batches: Vec<BatchRow>,
}

impl SimulationResult {
    pub fn message_error_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.message_errors as f64 / self.trials as f64
        }
    }

    /// Binomial standard error of the message error rate.
    pub fn standard_error(&self) -> f64 {
        let p = self.message_error_rate();
        (p * (1.0 - p) / self.trials.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitErrors {
    pub unit: ReceptionUnit,
    pub errors: u64,
}

/// One CSV row: a batch of consecutive trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub seed: u64,
    pub batch: u64,
    pub n_rep: usize,
    pub trials: u64,
    pub errors: u64,
}

struct TrialOutcome {
    message_error: bool,
    unit_errors: Vec<bool>,
    failures: u64,
    power: Vec<f64>,
}

/// Precomputed decoding tables for a lifted system.
pub struct Simulator<'a> {
    system: LiftedSystem<'a>,
    runner: DsnRunner<'a>,
    /// `means[u][value]`: distinct noiseless Gaussian receptions of unit `u`
    /// that go with reception value `value`, flattened over time and antenna.
    means: Vec<Vec<Vec<Vec<GaussianSymbol>>>>,
    /// Units of each node, in time order.
    node_units: Vec<Vec<usize>>,
}

fn gaussian_links<'x>(incoming: &[(usize, LinkGain)], tx: impl Fn(usize) -> &'x [DiscreteSymbol]) -> Vec<(LinkGain, Vec<GaussianSymbol>)> {
    incoming.iter().map(|&(i, g)| (g, tx(i).iter().map(DiscreteSymbol::to_gaussian).collect())).collect()
}

fn receive(links: &[(LinkGain, Vec<GaussianSymbol>)], noise: &[GaussianSymbol]) -> Vec<GaussianSymbol> {
    let borrowed: Vec<(LinkGain, &[GaussianSymbol])> = links.iter().map(|(g, x)| (*g, x.as_slice())).collect();
    channel::gaussian_received(&borrowed, noise).expect("antenna counts validated")
}

impl<'a> Simulator<'a> {
    pub fn new(system: LiftedSystem<'a>) -> Result<Self> {
        let runner = DsnRunner::new(system.net, system.code)?;
        let induced = system.induced;
        if system.lifted.units != induced.units() {
            return Err(GaussianError::Config("lifted code and induced law have different units".into()));
        }
        if system.product.base() != system.code {
            return Err(GaussianError::Config("product code is not built on the given code".into()));
        }
        if system.lifted.pruned.n_rep != system.product.repetitions() {
            return Err(GaussianError::Config("lifted code and product code disagree on n".into()));
        }
        let engine = runner.engine();
        let antennas = engine.antennas();
        let zero_noise = vec![GaussianSymbol::ZERO; antennas];
        let n = system.code.block_length();
        let means = induced
            .units()
            .iter()
            .enumerate()
            .map(|(u, unit)| {
                let mut per_value: Vec<BTreeMap<Vec<(u64, u64)>, Vec<GaussianSymbol>>> =
                    vec![BTreeMap::new(); induced.unit_values(u).len()];
                let times: Vec<usize> = match unit.time {
                    None => (0..n).collect(),
                    Some(t) => vec![t],
                };
                for (m, trace) in induced.traces().iter().enumerate() {
                    let mean: Vec<GaussianSymbol> = times
                        .iter()
                        .flat_map(|&t| {
                            let links = gaussian_links(engine.incoming(unit.node), |i| &trace.transmitted[i][t]);
                            receive(&links, &zero_noise)
                        })
                        .collect();
                    let key = mean.iter().map(|s| (s.re.to_bits(), s.im.to_bits())).collect();
                    per_value[induced.row(m)[u + 1]].insert(key, mean);
                }
                per_value.into_iter().map(|v| v.into_values().collect()).collect()
            })
            .collect();
        let node_units = (0..system.net.node_count()).map(|j| induced.units_of(j)).collect();
        Ok(Simulator { system, runner, means, node_units })
    }

    /// ML / threshold choice within pruned set `unit`, from per-copy noisy
    /// blocks `y[r]`.
    fn decode_unit(&self, u: usize, y: &[Vec<GaussianSymbol>], method: DecodeMethod, variance: f64) -> Option<usize> {
        let set: &PrunedUnit = &self.system.lifted.pruned.units[u];
        let costs: Vec<Vec<f64>> = y
            .iter()
            .map(|block| {
                self.means[u]
                    .iter()
                    .map(|ms| ms.iter().map(|mu| sq_dist(block, mu)).fold(f64::INFINITY, f64::min))
                    .collect()
            })
            .collect();
        let symbols = y.iter().map(Vec::len).sum();
        select(
            (0..set.len()).map(|i| set.member(i).iter().zip(&costs).map(|(&a, c)| c[a]).sum()),
            method,
            symbols,
            variance,
        )
    }

    fn trial(&self, trial: u64, noise: &NoiseSpec, method: DecodeMethod) -> TrialOutcome {
        let LiftedSystem { net, code, induced, product, lifted } = self.system;
        let engine = self.runner.engine();
        let mut rng = seed::stream_rng(noise.seed, trial);
        let message = rng.random_range(0..lifted.len());
        let index = lifted.codewords[message];
        let digits = product.digits(index);
        let copies = digits.len();
        let n = code.block_length();
        let nodes = net.node_count();
        let antennas = engine.antennas();
        let units = induced.units().len();
        let variance = noise.variance();
        let destination = net.destination();

        let mut unit_errors = vec![false; units];
        let mut decoded: Vec<Option<Vec<usize>>> = vec![None; units];
        let mut failures = 0;
        let mut power = vec![0.0; nodes];
        let sample_noise = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<GaussianSymbol> {
            (0..antennas).map(|_| noise.sample(rng)).collect()
        };
        let record = |u: usize, choice: Option<usize>, decoded: &mut [Option<Vec<usize>>], errors: &mut [bool], failures: &mut u64| {
            match choice {
                Some(i) => {
                    let ids = lifted.pruned.units[u].member(i).to_vec();
                    errors[u] = ids != induced.reception_ids(&digits, u);
                    decoded[u] = Some(ids);
                }
                None => {
                    errors[u] = true;
                    *failures += 1;
                }
            }
        };

        match self.runner.schedule() {
            Schedule::Layered(levels) => {
                let mut tx: Vec<Vec<TxSymbol>> = vec![vec![engine.zero_symbol(); copies * n]; nodes];
                tx[0] = product.codeword(index);
                for level in levels.levels().iter().skip(1) {
                    for &j in level {
                        let u = self.node_units[j][0];
                        let y: Vec<Vec<GaussianSymbol>> = (0..copies)
                            .map(|r| {
                                (0..n)
                                    .flat_map(|t| {
                                        let links = gaussian_links(engine.incoming(j), |i| &tx[i][r * n + t]);
                                        receive(&links, &sample_noise(&mut rng))
                                    })
                                    .collect()
                            })
                            .collect();
                        record(u, self.decode_unit(u, &y, method, variance), &mut decoded, &mut unit_errors, &mut failures);
                        if engine.is_relay(j) {
                            if let Some(ids) = &decoded[u] {
                                tx[j] = ids
                                    .iter()
                                    .flat_map(|&a| induced.unit_values(u)[a].iter().map(|y| engine.relay_output(j, y)))
                                    .collect();
                            }
                        }
                    }
                }
                for (j, seq) in tx.iter().enumerate() {
                    power[j] = seq.iter().flatten().map(DiscreteSymbol::power).sum();
                }
            }
            Schedule::Causal => {
                let source = product.interleaved_codeword(index);
                for t in 0..n {
                    let mut current: Vec<Vec<TxSymbol>> = vec![vec![engine.zero_symbol(); copies]; nodes];
                    current[0] = source[t].clone();
                    if t > 0 {
                        for j in (1..nodes).filter(|&j| engine.is_relay(j)) {
                            let u = self.node_units[j][t - 1];
                            if let Some(ids) = &decoded[u] {
                                current[j] = ids
                                    .iter()
                                    .map(|&a| engine.relay_output(j, &induced.unit_values(u)[a][0]))
                                    .collect();
                            }
                        }
                    }
                    for j in 1..nodes {
                        let u = self.node_units[j][t];
                        let y: Vec<Vec<GaussianSymbol>> = (0..copies)
                            .map(|r| {
                                let links = gaussian_links(engine.incoming(j), |i| &current[i][r]);
                                receive(&links, &sample_noise(&mut rng))
                            })
                            .collect();
                        record(u, self.decode_unit(u, &y, method, variance), &mut decoded, &mut unit_errors, &mut failures);
                    }
                    for (j, block) in current.iter().enumerate() {
                        power[j] += block.iter().flatten().map(DiscreteSymbol::power).sum::<f64>();
                    }
                }
            }
        }

        let destination_units = &self.node_units[destination];
        let estimate: Option<Vec<usize>> = (0..copies)
            .map(|r| {
                let block: Option<Vec<RxSymbol>> = match self.runner.schedule() {
                    Schedule::Layered(_) => {
                        let u = destination_units[0];
                        decoded[u].as_ref().map(|ids| induced.unit_values(u)[ids[r]].clone())
                    }
                    Schedule::Causal => destination_units
                        .iter()
                        .map(|&u| decoded[u].as_ref().map(|ids| induced.unit_values(u)[ids[r]][0].clone()))
                        .collect(),
                };
                block.and_then(|b| code.decode(&b))
            })
            .collect();
        let message_error = estimate.is_none_or(|d| product.index_of(&d) != index);
        let per_node = (copies * n * antennas) as f64;
        TrialOutcome {
            message_error,
            unit_errors,
            failures,
            power: power.into_iter().map(|p| p / per_node).collect(),
        }
    }

    /// `trials` independent trials; trial `k` draws from stream
    /// `derive_seed(noise.seed, k)`. CSV batches hold `batch_size` trials.
    pub fn simulate(&self, trials: u64, noise: NoiseSpec, method: DecodeMethod, batch_size: u64) -> SimulationResult {
        let lifted = self.system.lifted;
        let units = self.system.induced.units();
        let nodes = self.system.net.node_count();
        let outcomes: Vec<TrialOutcome> = if lifted.is_empty() {
            Vec::new()
        } else {
            (0..trials).into_par_iter().map(|k| self.trial(k, &noise, method)).collect()
        };
        let mut unit_errors = vec![0u64; units.len()];
        let mut power = vec![0.0; nodes];
        let mut message_errors = 0;
        let mut failures = 0;
        let batch_size = batch_size.max(1);
        let mut batches = Vec::new();
        for (k, outcome) in outcomes.iter().enumerate() {
            let k = k as u64;
            if k % batch_size == 0 {
                batches.push(BatchRow {
                    seed: noise.seed,
                    batch: k / batch_size,
                    n_rep: self.system.product.repetitions(),
                    trials: 0,
                    errors: 0,
                });
            }
            let row = batches.last_mut().expect("batch opened");
            row.trials += 1;
            row.errors += u64::from(outcome.message_error);
            message_errors += u64::from(outcome.message_error);
            failures += outcome.failures;
            for (count, &e) in unit_errors.iter_mut().zip(&outcome.unit_errors) {
                *count += u64::from(e);
            }
            for (acc, p) in power.iter_mut().zip(&outcome.power) {
                *acc += p;
            }
        }
        let done = outcomes.len().max(1) as f64;
        SimulationResult {
            format: REPORT_FORMAT,
            seed: noise.seed,
            noise_scale: noise.scale,
            method,
            n_rep: self.system.product.repetitions(),
            block_length: self.system.code.block_length(),
            codewords: lifted.len(),
            trials: outcomes.len() as u64,
            message_errors,
            decode_failures: failures,
            unit_errors: units.iter().zip(unit_errors).map(|(&unit, errors)| UnitErrors { unit, errors }).collect(),
            average_power: power.into_iter().map(|p| p / done).collect(),
            batches,
        }
    }
}

/// Runs the lifted code over the Gaussian network `trials` times.
pub fn simulate_lifted(
    system: LiftedSystem<'_>,
    trials: u64,
    noise: NoiseSpec,
    method: DecodeMethod,
) -> Result<SimulationResult> {
    Ok(Simulator::new(system)?.simulate(trials, noise, method, 1000))
}

/// Law of the transmit symbols in a bound check.
#[derive(Debug, Clone, PartialEq)]
pub enum InputDistribution {
    /// Independent uniform symbols at every node and antenna.
    Uniform,
    /// Uniform over the listed joint transmissions (one symbol per node).
    Joint(Vec<Vec<TxSymbol>>),
}

impl InputDistribution {
    /// Joint transmissions of a code: every message and time index.
    pub fn from_code(net: &RelayNetwork, code: &RelayCode) -> Result<Self> {
        let runner = DsnRunner::new(net, code)?;
        let tuples = runner
            .run_all()
            .into_iter()
            .flat_map(|trace| {
                (0..code.block_length())
                    .map(|t| trace.transmitted.iter().map(|seq| seq[t].clone()).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            })
            .collect();
        Ok(InputDistribution::Joint(tuples))
    }

    pub fn name(&self) -> &'static str {
        match self {
            InputDistribution::Uniform => "uniform",
            InputDistribution::Joint(_) => "code_induced",
        }
    }
}

/// Smallest box holding every observed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub re_min: i64,
    pub re_max: i64,
    pub im_min: i64,
    pub im_max: i64,
}

fn support_of(hist: &BTreeMap<GaussianInteger, u64>) -> Option<Support> {
    let mut it = hist.keys();
    let first = it.next()?;
    Some(it.fold(
        Support { re_min: first.re, re_max: first.re, im_min: first.im, im_max: first.im },
        |s, g| Support {
            re_min: s.re_min.min(g.re),
            re_max: s.re_max.max(g.re),
            im_min: s.im_min.min(g.im),
            im_max: s.im_max.max(g.im),
        },
    ))
}

/// Entropy terms at one receive antenna.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaBound {
    pub antenna: usize,
    pub floor_v: EntropyEstimate,
    pub floor_z: EntropyEstimate,
    pub carry: EntropyEstimate,
    /// `Q(y) − y'`, whose entropy the three terms bound.
    pub genie: EntropyEstimate,
    pub sum: f64,
    pub slack: f64,
    pub support_v: Option<Support>,
    pub support_z: Option<Support>,
    pub support_carry: Option<Support>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeBound {
    pub node: usize,
    pub in_degree: usize,
    pub antennas: Vec<AntennaBound>,
    /// Sum of the three estimates over all antennas.
    pub sum: f64,
    /// Sum of their bootstrap half-widths.
    pub slack: f64,
    /// Per-node bound for `in_degree` incoming signals.
    pub kappa_reference: f64,
    pub within_kappa: bool,
    /// 16 bits for a single-antenna node with two incoming links.
    pub worked_bound: Option<f64>,
    pub within_worked_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub format: u32,
    pub seed: u64,
    pub samples: u64,
    pub input: String,
    pub m: usize,
    pub antenna_mode: AntennaMode,
    /// `κ(M)`, the network-wide constant; never below a node's reference.
    pub kappa_network: f64,
    /// Exact entropy of `floor(Z_R)`; twice this is the exact `H(floor(Z))`.
    pub cell_entropy_exact: f64,
    pub nodes: Vec<NodeBound>,
}

impl BoundReport {
    pub fn all_within_kappa(&self) -> bool {
        self.nodes.iter().all(|n| n.within_kappa)
    }
}

#[derive(Default, Clone)]
struct Histograms {
    v: BTreeMap<GaussianInteger, u64>,
    z: BTreeMap<GaussianInteger, u64>,
    c: BTreeMap<GaussianInteger, u64>,
    g: BTreeMap<GaussianInteger, u64>,
}

impl Histograms {
    fn merge(&mut self, other: Histograms) {
        for (mine, theirs) in [(&mut self.v, other.v), (&mut self.z, other.z), (&mut self.c, other.c), (&mut self.g, other.g)] {
            for (k, n) in theirs {
                *mine.entry(k).or_insert(0) += n;
            }
        }
    }
}

const BOUND_CHUNKS: u64 = 64;
const WORKED_BOUND: f64 = 16.0;

/// Monte Carlo estimates of `H(floor(V_j))`, `H(floor(Z_j))`, `H(C_j)` and
/// `H(Q(Y_j) − Y'_j)` at every receiving node, compared with `κ`.
pub fn verify_genie_bounds(
    net: &RelayNetwork,
    input: &InputDistribution,
    samples: u64,
    seed: u64,
) -> Result<BoundReport> {
    net.ensure_valid().map_err(DsnError::from)?;
    let bit_depth = net.bit_depth().map_err(DsnError::from)?;
    let antennas = net.antennas();
    let nodes = net.node_count();
    if let InputDistribution::Joint(tuples) = input {
        if tuples.is_empty() || tuples.iter().any(|t| t.len() != nodes || t.iter().any(|x| x.len() != antennas)) {
            return Err(GaussianError::Config("joint input tuples do not match the network".into()));
        }
    }
    let receivers: Vec<usize> = (1..nodes).filter(|&j| !net.incoming(j).is_empty()).collect();
    let incoming: Vec<Vec<(usize, LinkGain)>> =
        (0..nodes).map(|j| net.incoming(j).into_iter().map(|e| (e.from, e.gain)).collect()).collect();
    let alphabet = DiscreteSymbol::alphabet_size(bit_depth);
    let noise = NoiseSpec::new(seed);

    let chunk_hists: Vec<Vec<Vec<Histograms>>> = (0..BOUND_CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let count = samples / BOUND_CHUNKS + u64::from(chunk < samples % BOUND_CHUNKS);
            let mut rng = seed::stream_rng(seed, chunk);
            let mut hists = vec![vec![Histograms::default(); antennas]; receivers.len()];
            let mut uniform: Vec<TxSymbol> = vec![Vec::new(); nodes];
            for _ in 0..count {
                let tuple: &[TxSymbol] = match input {
                    InputDistribution::Uniform => {
                        for x in uniform.iter_mut() {
                            *x = (0..antennas)
                                .map(|_| {
                                    DiscreteSymbol::from_index(rng.random_range(0..alphabet), bit_depth)
                                        .expect("index in alphabet")
                                })
                                .collect();
                        }
                        &uniform
                    }
                    InputDistribution::Joint(tuples) => &tuples[rng.random_range(0..tuples.len())],
                };
                for (slot, &j) in receivers.iter().enumerate() {
                    let links: Vec<(LinkGain, &[DiscreteSymbol])> =
                        incoming[j].iter().map(|&(i, g)| (g, tuple[i].as_slice())).collect();
                    let z: Vec<GaussianSymbol> = (0..antennas).map(|_| noise.sample(&mut rng)).collect();
                    let parts = channel::decompose_received_links(&links, &z).expect("validated network");
                    for (h, d) in hists[slot].iter_mut().zip(parts) {
                        *h.v.entry(d.v.floor()).or_insert(0) += 1;
                        *h.z.entry(d.z.floor()).or_insert(0) += 1;
                        *h.c.entry(d.c).or_insert(0) += 1;
                        *h.g.entry(d.genie_residual()).or_insert(0) += 1;
                    }
                }
            }
            hists
        })
        .collect();
    let mut merged = vec![vec![Histograms::default(); antennas]; receivers.len()];
    for chunk in chunk_hists {
        for (acc, node) in merged.iter_mut().zip(chunk) {
            for (a, h) in acc.iter_mut().zip(node) {
                a.merge(h);
            }
        }
    }

    let kappa_for = |m: usize| -> Result<f64> {
        let params = lifting::KappaParams::new(m, net.antenna_mode(), None)
            .map_err(|e| GaussianError::Config(e.to_string()))?;
        Ok(params.formula())
    };
    let kappa_network = kappa_for(net.m())?;
    let mut stream = 0u64;
    let mut estimate = |hist: &BTreeMap<GaussianInteger, u64>| {
        stream += 1;
        let counts: Vec<u64> = hist.values().copied().collect();
        estimate::estimate_entropy(&counts, BOOTSTRAP_RESAMPLES, seed::derive_seed(seed ^ 0xB007_5742, stream))
    };
    let node_bounds = receivers
        .iter()
        .zip(&merged)
        .map(|(&j, hists)| {
            let antenna_bounds: Vec<AntennaBound> = hists
                .iter()
                .enumerate()
                .map(|(l, h)| {
                    let (v, z, c, g) = (estimate(&h.v), estimate(&h.z), estimate(&h.c), estimate(&h.g));
                    AntennaBound {
                        antenna: l,
                        sum: v.estimate + z.estimate + c.estimate,
                        slack: v.half_width() + z.half_width() + c.half_width(),
                        floor_v: v,
                        floor_z: z,
                        carry: c,
                        genie: g,
                        support_v: support_of(&h.v),
                        support_z: support_of(&h.z),
                        support_carry: support_of(&h.c),
                    }
                })
                .collect();
            let sum: f64 = antenna_bounds.iter().map(|a| a.sum).sum();
            let slack: f64 = antenna_bounds.iter().map(|a| a.slack).sum();
            let in_degree = incoming[j].len();
            let kappa_reference = kappa_for(in_degree)?;
            let worked_bound = (antennas == 1 && in_degree == 2).then_some(WORKED_BOUND);
            Ok(NodeBound {
                node: j,
                in_degree,
                antennas: antenna_bounds,
                sum,
                slack,
                kappa_reference,
                within_kappa: sum <= kappa_reference + slack,
                worked_bound,
                within_worked_bound: worked_bound.map(|b| sum <= b + slack),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundReport {
        format: REPORT_FORMAT,
        seed,
        samples,
        input: input.name().to_string(),
        m: net.m(),
        antenna_mode: net.antenna_mode(),
        kappa_network,
        cell_entropy_exact: exact_gaussian_cell_entropy(),
        nodes: node_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsn::build_product_code;
    use crate::fixtures;
    use crate::lifting::{build_lifted_code, prune_sets, KappaParams};
    use crate::topology::Edge;
    use crate::typicality::{enumerate_typical_receptions, induced_distribution};

    /// Cell law by Simpson integration of the N(0, 1/2) density.
    fn simpson_cell(k: i64) -> f64 {
        let density = |x: f64| (-x * x).exp() / std::f64::consts::PI.sqrt();
        let (a, b) = (k as f64, k as f64 + 1.0);
        let steps = 4000;
        let h = (b - a) / steps as f64;
        let mut s = density(a) + density(b);
        for i in 1..steps {
            s += density(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn cell_law_matches_quadrature() {
        let cells = gaussian_cell_probabilities();
        let total: f64 = cells.iter().map(|c| c.1).sum();
        assert!((total - 1.0).abs() < 1e-10);
        for &(k, p) in &cells {
            assert!((p - simpson_cell(k)).abs() < 1e-12, "cell {k}");
        }
        let map: BTreeMap<i64, f64> = cells.iter().copied().collect();
        for (&k, &p) in &map {
            assert_eq!(p, map[&(-k - 1)]);
        }
        assert!((map[&0] - 0.4214).abs() < 1e-4);
        assert!((map[&1] - 0.0763).abs() < 1e-4);
        let h = exact_gaussian_cell_entropy();
        let oracle: f64 = -(-8..8).map(simpson_cell).map(|p| p * p.log2()).sum::<f64>();
        assert!((h - oracle).abs() < 1e-9);
        assert!(2.0 * h < 8.0);
    }

    #[test]
    fn decode_examples() {
        let exact = vec![GaussianSymbol::new(3.0, -1.0)];
        let c = |re: i64, im: i64| Candidate {
            reception: vec![GaussianInteger::new(re, im)],
            means: vec![vec![GaussianSymbol::new(re as f64, im as f64)]],
        };
        let cands = vec![c(0, 0), c(3, -1), c(5, 5)];
        assert_eq!(decode_to_set(&exact, &cands, 1, DecodeMethod::Ml, 1.0), Some(1));
        let far = vec![GaussianSymbol::new(100.0, 100.0)];
        assert_eq!(decode_to_set(&far, &cands[..1], 1, DecodeMethod::Ml, 1.0), Some(0));
        // Ties go to the lowest index.
        let mid = vec![GaussianSymbol::new(1.5, -0.5)];
        assert_eq!(decode_to_set(&mid, &[c(0, 0), c(3, -1)], 1, DecodeMethod::Ml, 1.0), Some(0));
        let threshold = DecodeMethod::Threshold { slack: 0.5 };
        assert_eq!(decode_to_set(&exact, &cands, 1, threshold, 1.0), Some(1));
        assert_eq!(decode_to_set(&far, &cands, 1, threshold, 1.0), None);
        assert_eq!(decode_to_set(&exact, &[c(3, -1), c(3, -1)], 1, threshold, 1.0), None);
        // Without means the bounded-offset box is used.
        let boxed = Candidate { reception: vec![GaussianInteger::new(3, -1)], means: Vec::new() };
        assert_eq!(decode_to_set(&exact, &[c(40, 40), boxed], 1, DecodeMethod::Ml, 1.0), Some(1));
    }

    /// Q(x) = P(N(0,1) > x).
    fn q_function(x: f64) -> f64 {
        0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn pairwise_error_matches_q_function() {
        let d = 2.0;
        let cands = vec![
            Candidate { reception: vec![GaussianInteger::new(0, 0)], means: vec![vec![GaussianSymbol::ZERO]] },
            Candidate { reception: vec![GaussianInteger::new(2, 0)], means: vec![vec![GaussianSymbol::new(d, 0.0)]] },
        ];
        let noise = NoiseSpec::new(11);
        let draws = 10_000;
        let mut rng = seed::stream_rng(11, 0);
        let errors = (0..draws)
            .filter(|_| decode_to_set(&[noise.sample(&mut rng)], &cands, 1, DecodeMethod::Ml, 1.0) != Some(0))
            .count();
        // Error iff the real noise exceeds d/2, with standard deviation 1/√2.
        let p = q_function(d / 2.0 * std::f64::consts::SQRT_2);
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        let observed = errors as f64 / draws as f64;
        assert!((observed - p).abs() <= 3.0 * sigma, "{observed} vs {p}");
    }

    struct Built {
        net: RelayNetwork,
        code: RelayCode,
        induced: InducedDistribution,
        product: ProductCode,
        lifted: LiftedCode,
    }

    fn build(net: RelayNetwork, n_rep: usize, kappa: f64, seed: u64) -> Built {
        let code = crate::dsn::search_base_code(&net, 2, 1.0, 30, 4).unwrap().unwrap();
        let induced = induced_distribution(&net, &code).unwrap();
        let product = build_product_code(&code, n_rep).unwrap();
        let typical = (0..induced.units().len())
            .map(|u| enumerate_typical_receptions(&induced, u, n_rep, 1.0).unwrap())
            .collect();
        let length_factor = if induced.is_layered() { 2 } else { 1 };
        let kappa = KappaParams::for_network(&net, Some(kappa)).unwrap();
        let pruned = prune_sets(typical, kappa, Some(0.0), n_rep, length_factor, seed).unwrap();
        let lifted = build_lifted_code(&induced, &product, &pruned, 1.0);
        Built { net, code, induced, product, lifted }
    }

    impl Built {
        fn system(&self) -> LiftedSystem<'_> {
            LiftedSystem {
                net: &self.net,
                code: &self.code,
                induced: &self.induced,
                product: &self.product,
                lifted: &self.lifted,
            }
        }
    }

    #[test]
    fn noiseless_limit_is_error_free() {
        for net in [fixtures::diamond(), fixtures::nonlayered()] {
            let b = build(net, 3, 0.1, 1);
            assert!(!b.lifted.is_empty());
            let result = simulate_lifted(b.system(), 300, NoiseSpec::new(5).with_scale(0.0), DecodeMethod::Ml).unwrap();
            assert_eq!(result.message_errors, 0);
            assert!(result.unit_errors.iter().all(|u| u.errors == 0));
            let threshold = DecodeMethod::Threshold { slack: 0.5 };
            let result = simulate_lifted(b.system(), 300, NoiseSpec::new(5).with_scale(0.0), threshold).unwrap();
            assert_eq!(result.message_errors, 0);
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let b = build(fixtures::diamond(), 3, 0.25, 2);
        let a = simulate_lifted(b.system(), 500, NoiseSpec::new(9), DecodeMethod::Ml).unwrap();
        let c = simulate_lifted(b.system(), 500, NoiseSpec::new(9), DecodeMethod::Ml).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
        assert_eq!(a.batches.iter().map(|r| r.trials).sum::<u64>(), 500);
    }

    #[test]
    fn factorized_ml_matches_generic_decoder() {
        let b = build(fixtures::diamond(), 2, 0.0, 3);
        let sim = Simulator::new(b.system()).unwrap();
        let u = 0;
        let set = &b.lifted.pruned.units[u];
        let n = b.code.block_length();
        let mut rng = seed::stream_rng(1, 2);
        for _ in 0..50 {
            let y: Vec<Vec<GaussianSymbol>> = (0..2)
                .map(|_| (0..n).map(|_| noise_point(&mut rng)).collect())
                .collect();
            let flat: Vec<GaussianSymbol> = y.concat();
            let candidates: Vec<Candidate> = (0..set.len())
                .map(|i| {
                    let ids = set.member(i);
                    let reception = ids.iter().flat_map(|&a| b.induced.unit_values(u)[a].concat()).collect();
                    let mut means = vec![Vec::new()];
                    for &a in ids {
                        means = means
                            .into_iter()
                            .flat_map(|prefix: Vec<GaussianSymbol>| {
                                sim.means[u][a].iter().map(move |mu| [prefix.clone(), mu.clone()].concat())
                            })
                            .collect();
                    }
                    Candidate { reception, means }
                })
                .collect();
            assert_eq!(
                sim.decode_unit(u, &y, DecodeMethod::Ml, 1.0),
                decode_to_set(&flat, &candidates, 1, DecodeMethod::Ml, 1.0)
            );
        }
    }

    fn noise_point(rng: &mut rand_chacha::ChaCha8Rng) -> GaussianSymbol {
        GaussianSymbol::new(rng.random_range(-1.0..5.0), rng.random_range(-1.0..5.0))
    }

    #[test]
    fn singleton_sets_never_err() {
        let b = build(fixtures::diamond(), 4, 0.0, 3);
        let pruned = &b.lifted.pruned;
        let keep = b.lifted.codewords[0];
        let prov = &b.lifted.provenance[0];
        let units = pruned
            .units
            .iter()
            .zip(prov)
            .map(|(unit, &i)| {
                PrunedUnit::from_positions(unit.typical.clone(), vec![unit.selected()[i]])
            })
            .collect();
        let lifted = build_lifted_code(&b.induced, &b.product, &pruned.with_units(units), 1.0);
        assert_eq!(lifted.codewords, vec![keep]);
        let system = LiftedSystem { lifted: &lifted, ..b.system() };
        let result = simulate_lifted(system, 2000, NoiseSpec::new(3), DecodeMethod::Ml).unwrap();
        assert_eq!(result.message_errors, 0);
        assert!(result.unit_errors.iter().all(|u| u.errors == 0));
    }

    #[test]
    fn unreachable_node_decodes_its_singleton() {
        let net = RelayNetwork::new(
            4,
            AntennaMode::Scalar,
            vec![Edge::scalar(0, 1, 2.0, 0.0), Edge::scalar(1, 3, 3.0, 0.0), Edge::scalar(0, 2, 0.0, 0.0)],
        );
        let b = build(net, 3, 0.0, 1);
        let result = simulate_lifted(b.system(), 500, NoiseSpec::new(1), DecodeMethod::Ml).unwrap();
        let node2 = result.unit_errors.iter().find(|u| u.unit.node == 2).unwrap();
        assert_eq!(node2.errors, 0);
    }

    #[test]
    fn integer_gains_shrink_floor_v_entropy() {
        let fractional = RelayNetwork::new(
            3,
            AntennaMode::Scalar,
            vec![Edge::scalar(0, 1, 5.7, 3.4), Edge::scalar(0, 2, 6.6, -2.5), Edge::scalar(1, 2, 4.5, 7.2)],
        );
        let integer = RelayNetwork::new(
            3,
            AntennaMode::Scalar,
            vec![Edge::scalar(0, 1, 5.0, 3.0), Edge::scalar(0, 2, 6.0, -2.0), Edge::scalar(1, 2, 4.0, 7.0)],
        );
        let a = verify_genie_bounds(&fractional, &InputDistribution::Uniform, 20_000, 1).unwrap();
        let b = verify_genie_bounds(&integer, &InputDistribution::Uniform, 20_000, 1).unwrap();
        let v = |r: &BoundReport| r.nodes[1].antennas[0].floor_v.estimate;
        assert!(v(&b) < v(&a));
        // Integer gains: two truncation residues in (−1, 1) per component.
        let s = b.nodes[1].antennas[0].support_v.unwrap();
        assert!(s.re_min >= -2 && s.re_max <= 1 && s.im_min >= -2 && s.im_max <= 1);
    }

    #[test]
    fn bound_report_basics() {
        let net = fixtures::diamond();
        let report = verify_genie_bounds(&net, &InputDistribution::Uniform, 20_000, 4).unwrap();
        assert_eq!(report.kappa_network, lifting::kappa(3));
        assert_eq!(report.nodes[0].kappa_reference, lifting::kappa(1));
        assert_eq!(report.nodes[2].kappa_reference, lifting::kappa(2));
        assert_eq!(report.nodes.len(), 3);
        assert!(report.all_within_kappa());
        let node3 = &report.nodes[2];
        assert_eq!(node3.worked_bound, Some(16.0));
        for node in &report.nodes {
            assert!(node.antennas[0].floor_z.estimate < 8.0);
        }
        let again = verify_genie_bounds(&net, &InputDistribution::Uniform, 20_000, 4).unwrap();
        assert_eq!(report, again);
        let code = fixtures::diamond_code(&net);
        let joint = InputDistribution::from_code(&net, &code).unwrap();
        let induced = verify_genie_bounds(&net, &joint, 5_000, 4).unwrap();
        assert_eq!(induced.input, "code_induced");
    }
}
