//! Codes on the discrete superposition network.
//!
//! A [`RelayCode`] is a source codebook, one symbol-wise [`RelayMap`] per
//! relay and a table decoder at the destination. How a relay map is fed
//! depends on the network's [`Schedule`]:
//!
//! * layered networks run level by level; a relay buffers the whole block
//!   from the previous level and transmits `x_j(t) = f_j(y'_j(t))` over the
//!   next block period;
//! * other networks run synchronously with a one-symbol delay,
//!   `x_j(t) = f_j(y'_j(t - 1))` and `x_j(1) = 0`, so every transmission
//!   depends only on strictly earlier receptions.
//!
//! The destination never transmits. Messages index the codebook in
//! lexicographic codeword order.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{self, ChannelError, DiscreteSymbol, GaussianInteger, LinkGain};
use crate::seed;
use crate::topology::{self, LevelDecomposition, RelayNetwork, TopologyError};

/// Transmit symbol of one node at one time, one entry per antenna.
pub type TxSymbol = Vec<DiscreteSymbol>;
/// Received symbol of one node at one time, one entry per antenna.
pub type RxSymbol = Vec<GaussianInteger>;

/// Format tag of serialized codes.
pub const CODE_FORMAT: u32 = 1;

/// Codes with more faulty codewords than this fraction cannot be purified.
pub const PURIFY_DELTA_MAX: f64 = 0.5;

/// Upper bound on reception-alphabet sizes enumerated for table maps.
const TABLE_ALPHABET_LIMIT: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum DsnError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("code bit depth {code} does not match network bit depth {network}")]
    BitDepthMismatch { code: u32, network: u32 },
    #[error("code uses {code} antennas, network uses {network}")]
    AntennaMismatch { code: usize, network: usize },
    #[error("no relay map for relay node {0}")]
    MissingRelayMap(usize),
    #[error("invalid code: {0}")]
    InvalidCode(String),
    #[error("message {message} out of range for {count} codewords")]
    MessageOutOfRange { message: usize, count: usize },
    #[error("error probability {delta} is not below {PURIFY_DELTA_MAX}")]
    TooManyErrors { delta: f64 },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("causality violation: block {read} read while emitting block {emitting}")]
    CausalityViolation { read: usize, emitting: usize },
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("invalid code file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, DsnError>;

/// Execution order of a network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Schedule {
    Layered(LevelDecomposition),
    Causal,
}

impl Schedule {
    pub fn for_network(net: &RelayNetwork) -> Schedule {
        topology::layer_decomposition(net).map_or(Schedule::Causal, Schedule::Layered)
    }

    pub fn is_layered(&self) -> bool {
        matches!(self, Schedule::Layered(_))
    }
}

/// Symbol-wise relay strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelayMap {
    /// Drop `shift` low bits of each reception component and keep the next
    /// `n` bits as the transmitted fraction, `k = floor(y / 2^shift) mod 2^n`.
    QuantizeForward { shift: u32 },
    /// `k = (multiplier * y) mod 2^n` per component.
    Modulo { multiplier: u64 },
    /// Explicit lookup; receptions without an entry send `default`.
    Table { entries: BTreeMap<RxSymbol, TxSymbol>, default: TxSymbol },
}

impl RelayMap {
    pub fn apply(&self, reception: &[GaussianInteger], bit_depth: u32) -> TxSymbol {
        let snap = |c: i128| c.rem_euclid(1i128 << bit_depth) as u32;
        let per_component = |f: &dyn Fn(i64) -> i128| -> TxSymbol {
            reception
                .iter()
                .map(|y| {
                    DiscreteSymbol::new(snap(f(y.re)), snap(f(y.im)), bit_depth)
                        .expect("snapped fraction fits the bit depth")
                })
                .collect()
        };
        match self {
            RelayMap::QuantizeForward { shift } => {
                per_component(&|c| i128::from(c).div_euclid(1i128 << shift))
            }
            RelayMap::Modulo { multiplier } => {
                per_component(&|c| i128::from(c) * i128::from(*multiplier))
            }
            RelayMap::Table { entries, default } => {
                entries.get(reception).cloned().unwrap_or_else(|| default.clone())
            }
        }
    }
}

fn zero_symbol(bit_depth: u32, antennas: usize) -> TxSymbol {
    vec![DiscreteSymbol::zero(bit_depth).expect("bit depth checked"); antennas]
}

fn zero_reception(antennas: usize) -> RxSymbol {
    vec![GaussianInteger::ZERO; antennas]
}

/// Code for the superposition network.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayCode {
    bit_depth: u32,
    antennas: usize,
    block_length: usize,
    codebook: Vec<Vec<TxSymbol>>,
    relay_maps: BTreeMap<usize, RelayMap>,
    decoder: BTreeMap<Vec<RxSymbol>, usize>,
}

impl RelayCode {
    pub fn new(
        bit_depth: u32,
        antennas: usize,
        block_length: usize,
        codebook: Vec<Vec<TxSymbol>>,
        relay_maps: BTreeMap<usize, RelayMap>,
        decoder: BTreeMap<Vec<RxSymbol>, usize>,
    ) -> Result<Self> {
        if block_length == 0 {
            return Err(DsnError::InvalidCode("block length must be positive".into()));
        }
        if codebook.is_empty() {
            return Err(DsnError::InvalidCode("codebook is empty".into()));
        }
        let check_symbol = |x: &TxSymbol| -> Result<()> {
            if x.len() != antennas {
                return Err(DsnError::InvalidCode(format!(
                    "symbol has {} antennas, code has {antennas}",
                    x.len()
                )));
            }
            if let Some(bad) = x.iter().find(|s| s.bit_depth() != bit_depth) {
                return Err(DsnError::BitDepthMismatch { code: bit_depth, network: bad.bit_depth() });
            }
            Ok(())
        };
        for word in &codebook {
            if word.len() != block_length {
                return Err(DsnError::InvalidCode(format!(
                    "codeword of length {} in a block-length-{block_length} code",
                    word.len()
                )));
            }
            word.iter().try_for_each(check_symbol)?;
        }
        for map in relay_maps.values() {
            if let RelayMap::Table { entries, default } = map {
                check_symbol(default)?;
                entries.values().try_for_each(check_symbol)?;
            }
        }
        if let Some((_, &m)) = decoder.iter().find(|(_, &m)| m >= codebook.len()) {
            return Err(DsnError::InvalidCode(format!("decoder outputs message {m}")));
        }
        Ok(RelayCode { bit_depth, antennas, block_length, codebook, relay_maps, decoder })
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn len(&self) -> usize {
        self.codebook.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codebook.is_empty()
    }

    /// Rate in bits per channel use, `log2(|codebook|) / N`.
    pub fn rate(&self) -> f64 {
        (self.codebook.len() as f64).log2() / self.block_length as f64
    }

    pub fn codebook(&self) -> &[Vec<TxSymbol>] {
        &self.codebook
    }

    pub fn codeword(&self, message: usize) -> &[TxSymbol] {
        &self.codebook[message]
    }

    pub fn relay_maps(&self) -> &BTreeMap<usize, RelayMap> {
        &self.relay_maps
    }

    pub fn decoder(&self) -> &BTreeMap<Vec<RxSymbol>, usize> {
        &self.decoder
    }

    /// Destination decision for a received block; `None` when the block is
    /// not in the decoder table.
    pub fn decode(&self, reception: &[RxSymbol]) -> Option<usize> {
        self.decoder.get(reception).copied()
    }

    pub fn with_decoder(&self, decoder: BTreeMap<Vec<RxSymbol>, usize>) -> Result<RelayCode> {
        RelayCode::new(
            self.bit_depth,
            self.antennas,
            self.block_length,
            self.codebook.clone(),
            self.relay_maps.clone(),
            decoder,
        )
    }
}

/// Per-node signals of one execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkTrace {
    pub message: usize,
    /// `transmitted[node][t]`.
    pub transmitted: Vec<Vec<TxSymbol>>,
    /// `received[node][t]`; the source row is all zero.
    pub received: Vec<Vec<RxSymbol>>,
    pub decoded: Option<usize>,
}

impl NetworkTrace {
    pub fn is_correct(&self) -> bool {
        self.decoded == Some(self.message)
    }
}

/// Network plus relay strategy, ready to execute arbitrary source sequences.
#[derive(Debug, Clone)]
pub(crate) struct Engine<'a> {
    net: &'a RelayNetwork,
    schedule: Schedule,
    bit_depth: u32,
    antennas: usize,
    maps: &'a BTreeMap<usize, RelayMap>,
    incoming: Vec<Vec<(usize, LinkGain)>>,
}

pub(crate) struct Execution {
    pub transmitted: Vec<Vec<TxSymbol>>,
    pub received: Vec<Vec<RxSymbol>>,
}

impl<'a> Engine<'a> {
    pub fn new(
        net: &'a RelayNetwork,
        bit_depth: u32,
        antennas: usize,
        maps: &'a BTreeMap<usize, RelayMap>,
    ) -> Result<Self> {
        net.ensure_valid()?;
        let network_depth = net.bit_depth()?;
        if network_depth != bit_depth {
            return Err(DsnError::BitDepthMismatch { code: bit_depth, network: network_depth });
        }
        if net.antennas() != antennas {
            return Err(DsnError::AntennaMismatch { code: antennas, network: net.antennas() });
        }
        if let Some(relay) = (1..net.destination()).find(|j| !maps.contains_key(j)) {
            return Err(DsnError::MissingRelayMap(relay));
        }
        let incoming = (0..net.node_count())
            .map(|j| net.incoming(j).into_iter().map(|e| (e.from, e.gain)).collect())
            .collect();
        Ok(Engine { net, schedule: Schedule::for_network(net), bit_depth, antennas, maps, incoming })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn is_relay(&self, node: usize) -> bool {
        node != 0 && node != self.net.destination()
    }

    pub fn zero_symbol(&self) -> TxSymbol {
        zero_symbol(self.bit_depth, self.antennas)
    }

    pub fn incoming(&self, node: usize) -> &[(usize, LinkGain)] {
        &self.incoming[node]
    }

    /// Transmission of `node` in response to `reception`.
    pub fn relay_output(&self, node: usize, reception: &[GaussianInteger]) -> TxSymbol {
        match self.maps.get(&node) {
            Some(map) if self.is_relay(node) => map.apply(reception, self.bit_depth),
            _ => self.zero_symbol(),
        }
    }

    fn receive_at(&self, node: usize, transmitted: &[Vec<TxSymbol>], t: usize) -> RxSymbol {
        let links: Vec<(LinkGain, &[DiscreteSymbol])> = self.incoming[node]
            .iter()
            .map(|&(i, gain)| (gain, transmitted[i][t].as_slice()))
            .collect();
        channel::superposition_received(&links, self.antennas).expect("antenna counts validated")
    }

    /// Runs a source sequence of any length under the network's schedule.
    pub fn execute(&self, source: &[TxSymbol]) -> Execution {
        let len = source.len();
        let nodes = self.net.node_count();
        let mut transmitted = vec![vec![self.zero_symbol(); len]; nodes];
        let mut received = vec![vec![zero_reception(self.antennas); len]; nodes];
        transmitted[0] = source.to_vec();
        match &self.schedule {
            Schedule::Layered(levels) => {
                for level in levels.levels().iter().skip(1) {
                    for &j in level {
                        for t in 0..len {
                            received[j][t] = self.receive_at(j, &transmitted, t);
                        }
                        if self.is_relay(j) {
                            transmitted[j] =
                                received[j].iter().map(|y| self.relay_output(j, y)).collect();
                        }
                    }
                }
            }
            Schedule::Causal => {
                for t in 0..len {
                    if t > 0 {
                        for j in (1..nodes).filter(|&j| self.is_relay(j)) {
                            transmitted[j][t] = self.relay_output(j, &received[j][t - 1]);
                        }
                    }
                    for j in 1..nodes {
                        received[j][t] = self.receive_at(j, &transmitted, t);
                    }
                }
            }
        }
        Execution { transmitted, received }
    }
}

/// Reusable executor of one code on one network.
#[derive(Debug, Clone)]
pub struct DsnRunner<'a> {
    engine: Engine<'a>,
    code: &'a RelayCode,
}

impl<'a> DsnRunner<'a> {
    pub fn new(net: &'a RelayNetwork, code: &'a RelayCode) -> Result<Self> {
        let engine = Engine::new(net, code.bit_depth, code.antennas, &code.relay_maps)?;
        Ok(DsnRunner { engine, code })
    }

    pub fn schedule(&self) -> &Schedule {
        self.engine.schedule()
    }

    pub fn code(&self) -> &RelayCode {
        self.code
    }

    pub(crate) fn engine(&self) -> &Engine<'a> {
        &self.engine
    }

    pub fn run(&self, message: usize) -> Result<NetworkTrace> {
        let count = self.code.len();
        let word = self
            .code
            .codebook
            .get(message)
            .ok_or(DsnError::MessageOutOfRange { message, count })?;
        let Execution { transmitted, received } = self.engine.execute(word);
        let decoded = self.code.decode(&received[self.engine.net.destination()]);
        Ok(NetworkTrace { message, transmitted, received, decoded })
    }

    /// Traces of every message, in message order.
    pub fn run_all(&self) -> Vec<NetworkTrace> {
        (0..self.code.len())
            .into_par_iter()
            .map(|m| self.run(m).expect("message in range"))
            .collect()
    }
}

/// Executes `code` on `net` for one message.
pub fn run_dsn(net: &RelayNetwork, code: &RelayCode, message: usize) -> Result<NetworkTrace> {
    DsnRunner::new(net, code)?.run(message)
}

/// Messages that the destination decodes incorrectly.
pub fn faulty_messages(net: &RelayNetwork, code: &RelayCode) -> Result<Vec<usize>> {
    let runner = DsnRunner::new(net, code)?;
    Ok(runner.run_all().into_iter().filter(|t| !t.is_correct()).map(|t| t.message).collect())
}

/// Average error probability under uniform messages, by exhaustive replay.
pub fn error_probability(net: &RelayNetwork, code: &RelayCode) -> Result<f64> {
    Ok(faulty_messages(net, code)?.len() as f64 / code.len() as f64)
}

/// Keeps exactly the codewords that are always decoded correctly.
///
/// On a noiseless network each codeword is decoded either always or never
/// correctly, so discarding the faulty ones leaves a zero-error code with at
/// least half of the codewords whenever the error probability is below 1/2.
pub fn purify_zero_error(net: &RelayNetwork, code: &RelayCode) -> Result<RelayCode> {
    let runner = DsnRunner::new(net, code)?;
    let traces = runner.run_all();
    let faulty = traces.iter().filter(|t| !t.is_correct()).count();
    let delta = faulty as f64 / code.len() as f64;
    if delta >= PURIFY_DELTA_MAX {
        return Err(DsnError::TooManyErrors { delta });
    }
    if faulty == 0 {
        return Ok(code.clone());
    }
    let destination = net.destination();
    let mut codebook = Vec::with_capacity(code.len() - faulty);
    let mut decoder = BTreeMap::new();
    for trace in traces.iter().filter(|t| t.is_correct()) {
        decoder.insert(trace.received[destination].clone(), codebook.len());
        codebook.push(code.codebook[trace.message].clone());
    }
    RelayCode::new(
        code.bit_depth,
        code.antennas,
        code.block_length,
        codebook,
        code.relay_maps.clone(),
        decoder,
    )
}

/// The code obtained by using a base code `repetitions` times back to back.
///
/// Codeword `i` adjoins the base codewords of the base-`|C|` digits of `i`,
/// most significant digit first.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductCode {
    base: RelayCode,
    repetitions: usize,
    len: usize,
}

/// Builds the product code; the base code is expected to be zero-error.
pub fn build_product_code(code: &RelayCode, repetitions: usize) -> Result<ProductCode> {
    if repetitions == 0 {
        return Err(DsnError::InvalidCode("product code needs at least one repetition".into()));
    }
    let len = u32::try_from(repetitions)
        .ok()
        .and_then(|r| code.len().checked_pow(r))
        .ok_or_else(|| DsnError::TooLarge(format!("{}^{repetitions} codewords", code.len())))?;
    Ok(ProductCode { base: code.clone(), repetitions, len })
}

impl ProductCode {
    pub fn base(&self) -> &RelayCode {
        &self.base
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn block_length(&self) -> usize {
        self.repetitions * self.base.block_length
    }

    pub fn rate(&self) -> f64 {
        self.base.rate()
    }

    /// Base messages of codeword `index`, first block first.
    pub fn digits(&self, index: usize) -> Vec<usize> {
        let q = self.base.len();
        let mut digits = vec![0; self.repetitions];
        let mut rest = index;
        for slot in digits.iter_mut().rev() {
            *slot = rest % q;
            rest /= q;
        }
        digits
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits.iter().fold(0, |acc, &d| acc * self.base.len() + d)
    }

    /// Concatenated base codewords.
    pub fn codeword(&self, index: usize) -> Vec<TxSymbol> {
        self.digits(index).iter().flat_map(|&m| self.base.codebook[m].iter().cloned()).collect()
    }

    /// Codeword in transmission order of the interleaved scheme: block `t`
    /// holds the `t`-th symbols of all constituent base codewords.
    pub fn interleaved_codeword(&self, index: usize) -> Vec<Vec<TxSymbol>> {
        let words: Vec<Vec<TxSymbol>> =
            self.digits(index).iter().map(|&m| self.base.codebook[m].clone()).collect();
        interleave(&words).expect("base codewords share the block length")
    }

    /// Per-block base decisions for a concatenated destination reception.
    pub fn decode(&self, reception: &[RxSymbol]) -> Vec<Option<usize>> {
        reception.chunks(self.base.block_length).map(|block| self.base.decode(block)).collect()
    }
}

/// Reorders `n` equal-length sequences into blocks of their `t`-th entries.
pub fn interleave<T: Clone>(sequences: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let len = sequences.first().map_or(0, Vec::len);
    if let Some(bad) = sequences.iter().find(|s| s.len() != len) {
        return Err(DsnError::LengthMismatch { expected: len, found: bad.len() });
    }
    Ok((0..len).map(|t| sequences.iter().map(|s| s[t].clone()).collect()).collect())
}

/// Inverse of [`interleave`].
pub fn deinterleave<T: Clone>(blocks: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    interleave(blocks)
}

/// Append-only buffer of received blocks that refuses reads which would
/// break causality.
#[derive(Debug, Clone)]
pub struct CausalBuffer<T> {
    blocks: Vec<T>,
    reads: u64,
}

impl<T> Default for CausalBuffer<T> {
    fn default() -> Self {
        CausalBuffer { blocks: Vec::new(), reads: 0 }
    }
}

impl<T> CausalBuffer<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, block: T) {
        self.blocks.push(block);
    }

    /// Block `index`, read while emitting block `emitting`; only strictly
    /// earlier blocks may be read.
    pub fn read_before(&mut self, index: usize, emitting: usize) -> Result<&T> {
        if index >= emitting || index >= self.blocks.len() {
            return Err(DsnError::CausalityViolation { read: index, emitting });
        }
        self.reads += 1;
        Ok(&self.blocks[index])
    }

    pub fn reads(&self) -> u64 {
        self.reads
    }

    pub fn into_blocks(self) -> Vec<T> {
        self.blocks
    }
}

/// Trace of one product-code codeword, in concatenated (block) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductTrace {
    pub index: usize,
    pub transmitted: Vec<Vec<TxSymbol>>,
    pub received: Vec<Vec<RxSymbol>>,
    pub decoded: Vec<Option<usize>>,
    /// Causal-buffer reads made by the interleaved scheduler (0 when layered).
    pub causal_reads: u64,
}

impl ProductTrace {
    /// Restriction of node signals to base block `block`.
    pub fn block(&self, block: usize, block_length: usize) -> (Vec<Vec<TxSymbol>>, Vec<Vec<RxSymbol>>) {
        let range = block * block_length..(block + 1) * block_length;
        (
            self.transmitted.iter().map(|s| s[range.clone()].to_vec()).collect(),
            self.received.iter().map(|s| s[range.clone()].to_vec()).collect(),
        )
    }
}

/// Executes product-code codeword `index`: level by level on layered
/// networks, interleaved with causal buffering otherwise.
pub fn run_product(net: &RelayNetwork, product: &ProductCode, index: usize) -> Result<ProductTrace> {
    let runner = DsnRunner::new(net, &product.base)?;
    run_product_with(&runner, product, index)
}

pub(crate) fn run_product_with(
    runner: &DsnRunner<'_>,
    product: &ProductCode,
    index: usize,
) -> Result<ProductTrace> {
    if index >= product.len {
        return Err(DsnError::MessageOutOfRange { message: index, count: product.len });
    }
    let engine = runner.engine();
    let destination = engine.net.destination();
    if engine.schedule().is_layered() {
        let Execution { transmitted, received } = engine.execute(&product.codeword(index));
        let decoded = product.decode(&received[destination]);
        return Ok(ProductTrace { index, transmitted, received, decoded, causal_reads: 0 });
    }

    let nodes = engine.net.node_count();
    let copies = product.repetitions;
    let source_blocks = product.interleaved_codeword(index);
    let zero_block = vec![engine.zero_symbol(); copies];
    let mut buffers: Vec<CausalBuffer<Vec<RxSymbol>>> = (0..nodes).map(|_| CausalBuffer::new()).collect();
    let mut sent: Vec<Vec<Vec<TxSymbol>>> = vec![Vec::new(); nodes];
    for (t, source_block) in source_blocks.into_iter().enumerate() {
        let mut current: Vec<Vec<TxSymbol>> = vec![zero_block.clone(); nodes];
        current[0] = source_block;
        for j in (1..nodes).filter(|&j| engine.is_relay(j)) {
            if t > 0 {
                let previous = buffers[j].read_before(t - 1, t)?;
                current[j] = previous.iter().map(|y| engine.relay_output(j, y)).collect();
            }
        }
        for (j, buffer) in buffers.iter_mut().enumerate().skip(1) {
            let block: Vec<RxSymbol> = (0..copies)
                .map(|r| {
                    let links: Vec<(LinkGain, &[DiscreteSymbol])> = engine
                        .incoming(j)
                        .iter()
                        .map(|&(i, gain)| (gain, current[i][r].as_slice()))
                        .collect();
                    channel::superposition_received(&links, engine.antennas())
                        .expect("antenna counts validated")
                })
                .collect();
            buffer.push(block);
        }
        for (j, block) in current.into_iter().enumerate() {
            sent[j].push(block);
        }
    }
    let causal_reads = buffers.iter().map(CausalBuffer::reads).sum();
    let mut received = vec![Vec::new(); nodes];
    received[0] = vec![zero_reception(engine.antennas()); product.block_length()];
    for (j, buffer) in buffers.into_iter().enumerate().skip(1) {
        received[j] = deinterleave(&buffer.into_blocks())?.concat();
    }
    let transmitted = sent
        .into_iter()
        .map(|blocks| deinterleave(&blocks).map(|copies| copies.concat()))
        .collect::<Result<Vec<_>>>()?;
    let decoded = product.decode(&received[destination]);
    Ok(ProductTrace { index, transmitted, received, decoded, causal_reads })
}

/// All receptions a node can observe in one symbol, for any transmissions.
pub fn reception_alphabet(net: &RelayNetwork, node: usize, limit: usize) -> Result<BTreeSet<RxSymbol>> {
    let bit_depth = net.bit_depth()?;
    let antennas = net.antennas();
    let symbols = tx_alphabet(bit_depth, antennas)?;
    let mut sums: BTreeSet<RxSymbol> = BTreeSet::from([zero_reception(antennas)]);
    for edge in net.incoming(node) {
        let link: BTreeSet<RxSymbol> = symbols
            .iter()
            .map(|x| channel::superposition_received(&[(edge.gain, x.as_slice())], antennas))
            .collect::<std::result::Result<_, _>>()?;
        let mut next = BTreeSet::new();
        for s in &sums {
            for l in &link {
                next.insert(s.iter().zip(l).map(|(&a, &b)| a + b).collect::<RxSymbol>());
                if next.len() > limit {
                    return Err(DsnError::TooLarge(format!(
                        "reception alphabet of node {node} exceeds {limit}"
                    )));
                }
            }
        }
        sums = next;
    }
    Ok(sums)
}

/// Every transmit symbol for the given bit depth and antenna count.
pub fn tx_alphabet(bit_depth: u32, antennas: usize) -> Result<Vec<TxSymbol>> {
    let single = DiscreteSymbol::alphabet(bit_depth)?;
    let total = (single.len() as u64).checked_pow(antennas as u32).unwrap_or(u64::MAX);
    if total > 1 << 20 {
        return Err(DsnError::TooLarge(format!("{total} transmit symbols")));
    }
    let mut out: Vec<TxSymbol> = vec![Vec::new()];
    for _ in 0..antennas {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                single.iter().map(move |&s| {
                    let mut next = prefix.clone();
                    next.push(s);
                    next
                })
            })
            .collect();
    }
    Ok(out)
}

fn symbol_key(word: &[TxSymbol]) -> Vec<u64> {
    word.iter().flatten().map(DiscreteSymbol::index).collect()
}

/// Randomized search for a zero-error code of block length `block_length`
/// and rate `rate` (with `block_length * rate` an integer).
///
/// Each attempt fixes one relay-map family for all relays (quantize and
/// forward, modulo, or random lookup tables, cycling with the attempt
/// number), then grows the codebook greedily with codewords whose
/// destination reception is new. A candidate code is returned only after an
/// exhaustive zero-error replay; `Ok(None)` means the attempt budget ran out.
pub fn search_base_code(
    net: &RelayNetwork,
    block_length: usize,
    rate: f64,
    attempts: usize,
    master_seed: u64,
) -> Result<Option<RelayCode>> {
    net.ensure_valid()?;
    if block_length == 0 {
        return Err(DsnError::InvalidCode("block length must be positive".into()));
    }
    let bits = block_length as f64 * rate;
    if !(bits >= 0.0 && (bits - bits.round()).abs() < 1e-9) {
        return Err(DsnError::InvalidCode(format!("N*R = {bits} is not a non-negative integer")));
    }
    let bits = bits.round() as u32;
    if bits > 24 {
        return Err(DsnError::TooLarge(format!("2^{bits} codewords")));
    }
    let count = 1usize << bits;
    let bit_depth = net.bit_depth()?;
    let antennas = net.antennas();
    let symbols = tx_alphabet(bit_depth, antennas)?;
    let space = (symbols.len() as f64).powi(block_length as i32);
    if (count as f64) > space {
        return Ok(None);
    }
    let relays: Vec<usize> = (1..net.destination()).collect();
    let alphabets: BTreeMap<usize, Option<BTreeSet<RxSymbol>>> = relays
        .iter()
        .map(|&j| (j, reception_alphabet(net, j, TABLE_ALPHABET_LIMIT).ok()))
        .collect();

    for attempt in 0..attempts {
        let mut rng = seed::stream_rng(master_seed, attempt as u64);
        let family = attempt % 3;
        let maps: BTreeMap<usize, RelayMap> = relays
            .iter()
            .map(|&j| {
                let map = match (family, &alphabets[&j]) {
                    (1, _) => RelayMap::Modulo { multiplier: 2 * rng.random_range(0..64u64) + 1 },
                    (2, Some(alphabet)) => RelayMap::Table {
                        entries: alphabet
                            .iter()
                            .map(|y| (y.clone(), symbols[rng.random_range(0..symbols.len())].clone()))
                            .collect(),
                        default: zero_symbol(bit_depth, antennas),
                    },
                    _ => RelayMap::QuantizeForward {
                        shift: if attempt < 3 { 0 } else { rng.random_range(0..=bit_depth + 3) },
                    },
                };
                (j, map)
            })
            .collect();
        let engine = Engine::new(net, bit_depth, antennas, &maps)?;
        let destination = net.destination();

        let mut seen: BTreeMap<Vec<RxSymbol>, Vec<TxSymbol>> = BTreeMap::new();
        let consider = |word: Vec<TxSymbol>, seen: &mut BTreeMap<Vec<RxSymbol>, Vec<TxSymbol>>| {
            let reception = engine.execute(&word).received.swap_remove(destination);
            seen.entry(reception).or_insert(word);
        };
        if space <= 4096.0 {
            let mut all: Vec<Vec<TxSymbol>> = vec![Vec::new()];
            for _ in 0..block_length {
                all = all
                    .into_iter()
                    .flat_map(|prefix| {
                        symbols.iter().map(move |s| {
                            let mut w = prefix.clone();
                            w.push(s.clone());
                            w
                        })
                    })
                    .collect();
            }
            all.shuffle(&mut rng);
            for word in all {
                if seen.len() == count {
                    break;
                }
                consider(word, &mut seen);
            }
        } else {
            let budget = (64 * count).max(1024);
            for _ in 0..budget {
                if seen.len() == count {
                    break;
                }
                let word = (0..block_length)
                    .map(|_| symbols[rng.random_range(0..symbols.len())].clone())
                    .collect();
                consider(word, &mut seen);
            }
        }
        if seen.len() < count {
            continue;
        }
        let mut codebook: Vec<Vec<TxSymbol>> = seen.into_values().collect();
        codebook.sort_by_key(|w| symbol_key(w));
        let decoder = codebook
            .iter()
            .enumerate()
            .map(|(m, w)| (engine.execute(w).received.swap_remove(destination), m))
            .collect();
        let code = RelayCode::new(bit_depth, antennas, block_length, codebook, maps, decoder)?;
        if faulty_messages(net, &code)?.is_empty() {
            return Ok(Some(code));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SymbolDoc {
    re_bits: u32,
    im_bits: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum MapDoc {
    QuantizeForward { shift: u32 },
    Modulo { multiplier: u64 },
    Table { default: Vec<SymbolDoc>, entries: Vec<TableEntryDoc> },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntryDoc {
    reception: Vec<[i64; 2]>,
    transmit: Vec<SymbolDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecoderEntryDoc {
    reception: Vec<Vec<[i64; 2]>>,
    message: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeDoc {
    format: u32,
    bit_depth: u32,
    antennas: usize,
    block_length: usize,
    codebook: Vec<Vec<Vec<SymbolDoc>>>,
    relay_maps: BTreeMap<String, MapDoc>,
    decoder: Vec<DecoderEntryDoc>,
}

fn symbol_doc(x: &TxSymbol) -> Vec<SymbolDoc> {
    x.iter().map(|s| SymbolDoc { re_bits: s.re_bits(), im_bits: s.im_bits() }).collect()
}

fn rx_doc(y: &RxSymbol) -> Vec<[i64; 2]> {
    y.iter().map(|g| [g.re, g.im]).collect()
}

fn symbol_from_doc(doc: &[SymbolDoc], bit_depth: u32) -> Result<TxSymbol> {
    doc.iter()
        .map(|s| DiscreteSymbol::new(s.re_bits, s.im_bits, bit_depth).map_err(DsnError::from))
        .collect()
}

fn rx_from_doc(doc: &[[i64; 2]]) -> RxSymbol {
    doc.iter().map(|&[re, im]| GaussianInteger::new(re, im)).collect()
}

/// Versioned JSON form of a code.
pub fn save_code(code: &RelayCode) -> String {
    let doc = CodeDoc {
        format: CODE_FORMAT,
        bit_depth: code.bit_depth,
        antennas: code.antennas,
        block_length: code.block_length,
        codebook: code.codebook.iter().map(|w| w.iter().map(symbol_doc).collect()).collect(),
        relay_maps: code
            .relay_maps
            .iter()
            .map(|(j, map)| {
                let doc = match map {
                    RelayMap::QuantizeForward { shift } => MapDoc::QuantizeForward { shift: *shift },
                    RelayMap::Modulo { multiplier } => MapDoc::Modulo { multiplier: *multiplier },
                    RelayMap::Table { entries, default } => MapDoc::Table {
                        default: symbol_doc(default),
                        entries: entries
                            .iter()
                            .map(|(y, x)| TableEntryDoc { reception: rx_doc(y), transmit: symbol_doc(x) })
                            .collect(),
                    },
                };
                (j.to_string(), doc)
            })
            .collect(),
        decoder: code
            .decoder
            .iter()
            .map(|(y, &m)| DecoderEntryDoc { reception: y.iter().map(rx_doc).collect(), message: m })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("code document serializes");
    text.push('\n');
    text
}

pub fn load_code(text: &str) -> Result<RelayCode> {
    let doc: CodeDoc = serde_json::from_str(text).map_err(|e| DsnError::Parse(e.to_string()))?;
    if doc.format != CODE_FORMAT {
        return Err(DsnError::Parse(format!("unsupported format {}", doc.format)));
    }
    let n = doc.bit_depth;
    let codebook = doc
        .codebook
        .iter()
        .map(|w| w.iter().map(|x| symbol_from_doc(x, n)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut relay_maps = BTreeMap::new();
    for (key, map) in &doc.relay_maps {
        let node: usize = key.parse().map_err(|_| DsnError::Parse(format!("relay key {key:?}")))?;
        let map = match map {
            MapDoc::QuantizeForward { shift } => RelayMap::QuantizeForward { shift: *shift },
            MapDoc::Modulo { multiplier } => RelayMap::Modulo { multiplier: *multiplier },
            MapDoc::Table { default, entries } => RelayMap::Table {
                default: symbol_from_doc(default, n)?,
                entries: entries
                    .iter()
                    .map(|e| Ok((rx_from_doc(&e.reception), symbol_from_doc(&e.transmit, n)?)))
                    .collect::<Result<_>>()?,
            },
        };
        relay_maps.insert(node, map);
    }
    let decoder = doc
        .decoder
        .iter()
        .map(|e| (e.reception.iter().map(|y| rx_from_doc(y)).collect(), e.message))
        .collect();
    RelayCode::new(n, doc.antennas, doc.block_length, codebook, relay_maps, decoder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{quantize_gain, truncated_product, ComplexGain};
    use crate::fixtures;
    use proptest::prelude::*;

    fn sym(re: u32, im: u32, n: u32) -> TxSymbol {
        vec![DiscreteSymbol::new(re, im, n).unwrap()]
    }

    fn rx(re: i64, im: i64) -> RxSymbol {
        vec![GaussianInteger::new(re, im)]
    }

    fn identity_maps(relays: &[usize]) -> BTreeMap<usize, RelayMap> {
        relays.iter().map(|&j| (j, RelayMap::QuantizeForward { shift: 0 })).collect()
    }

    #[test]
    fn line_trace_matches_hand_execution() {
        let net = fixtures::line(2.0, 2.0);
        let code = RelayCode::new(1, 1, 1, vec![vec![sym(1, 0, 1)]], identity_maps(&[1]), BTreeMap::new())
            .unwrap();
        let trace = run_dsn(&net, &code, 0).unwrap();

        // Step-by-step oracle: trunc(2 * 0.5) = 1, forwarded as 1 mod 2 = 1 -> 0.5,
        // then trunc(2 * 0.5) = 1 at the destination.
        let h = quantize_gain(ComplexGain::new(2.0, 0.0));
        let y1 = truncated_product(h, DiscreteSymbol::new(1, 0, 1).unwrap());
        assert_eq!(y1, GaussianInteger::new(1, 0));
        let x1 = DiscreteSymbol::new((y1.re % 2) as u32, (y1.im % 2) as u32, 1).unwrap();
        let y2 = truncated_product(h, x1);
        assert_eq!(trace.received[1], vec![vec![y1]]);
        assert_eq!(trace.transmitted[1], vec![vec![x1]]);
        assert_eq!(trace.received[2], vec![vec![y2]]);
        assert_eq!(trace.decoded, None);
    }

    #[test]
    fn zero_codeword_gives_zero_trace() {
        for net in [fixtures::diamond(), fixtures::nonlayered()] {
            let n = net.bit_depth().unwrap();
            let zero = sym(0, 0, n);
            let code = RelayCode::new(
                n,
                1,
                3,
                vec![vec![zero.clone(); 3]],
                identity_maps(&(1..net.destination()).collect::<Vec<_>>()),
                BTreeMap::new(),
            )
            .unwrap();
            let trace = run_dsn(&net, &code, 0).unwrap();
            assert!(trace.transmitted.iter().flatten().all(|x| *x == zero));
            assert!(trace.received.iter().flatten().all(|y| *y == rx(0, 0)));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let net = fixtures::diamond();
        let code = fixtures::diamond_code(&net);
        for m in 0..code.len() {
            assert_eq!(run_dsn(&net, &code, m).unwrap(), run_dsn(&net, &code, m).unwrap());
        }
    }

    #[test]
    fn distinct_receptions_iff_zero_error() {
        let net = fixtures::diamond();
        let code = fixtures::diamond_code(&net);
        let runner = DsnRunner::new(&net, &code).unwrap();
        let traces = runner.run_all();
        let receptions: BTreeSet<_> = traces.iter().map(|t| t.received[3].clone()).collect();
        assert_eq!(receptions.len() == code.len(), traces.iter().all(NetworkTrace::is_correct));
        assert_eq!(receptions.len(), code.len());

        // Collapse the decoder onto one message and the equivalence still holds.
        let collapsed = code.with_decoder(code.decoder().keys().map(|y| (y.clone(), 0)).collect()).unwrap();
        assert!(!faulty_messages(&net, &collapsed).unwrap().is_empty());
    }

    #[test]
    fn causal_schedule_delays_relays() {
        let net = fixtures::nonlayered();
        let n = net.bit_depth().unwrap();
        let word = vec![sym(1, 0, n), sym(0, 0, n), sym(0, 0, n)];
        let code = RelayCode::new(n, 1, 3, vec![word], identity_maps(&[1, 2]), BTreeMap::new()).unwrap();
        let trace = run_dsn(&net, &code, 0).unwrap();
        for j in [1, 2] {
            assert_eq!(trace.transmitted[j][0], sym(0, 0, n));
        }
        // Node 3 hears only node 2, which cannot react before the second symbol.
        assert_eq!(trace.received[3][0], rx(0, 0));
    }

    #[test]
    fn bit_depth_and_relay_checks() {
        let net = fixtures::line(2.0, 2.0);
        let code = RelayCode::new(2, 1, 1, vec![vec![sym(1, 0, 2)]], identity_maps(&[1]), BTreeMap::new())
            .unwrap();
        assert!(matches!(run_dsn(&net, &code, 0), Err(DsnError::BitDepthMismatch { code: 2, network: 1 })));
        let code = RelayCode::new(1, 1, 1, vec![vec![sym(1, 0, 1)]], BTreeMap::new(), BTreeMap::new()).unwrap();
        assert!(matches!(run_dsn(&net, &code, 0), Err(DsnError::MissingRelayMap(1))));
    }

    #[test]
    fn purify_keeps_zero_error_code() {
        let net = fixtures::diamond();
        let code = fixtures::diamond_code(&net);
        assert_eq!(purify_zero_error(&net, &code).unwrap(), code);
    }

    fn corrupt(code: &RelayCode, net: &RelayNetwork, faulty: &[usize]) -> RelayCode {
        let runner = DsnRunner::new(net, code).unwrap();
        let mut decoder = code.decoder().clone();
        for &m in faulty {
            let y = runner.run(m).unwrap().received[net.destination()].clone();
            decoder.insert(y, (m + 1) % code.len());
        }
        code.with_decoder(decoder).unwrap()
    }

    #[test]
    fn purify_drops_faulty_codeword() {
        let net = fixtures::diamond();
        let code = fixtures::diamond_code(&net);
        assert_eq!(code.len(), 4);
        let bad = corrupt(&code, &net, &[2]);
        // Independent re-check: exactly one message misdecodes.
        assert_eq!(faulty_messages(&net, &bad).unwrap(), vec![2]);
        let pure = purify_zero_error(&net, &bad).unwrap();
        assert_eq!(pure.len(), 3);
        assert!(faulty_messages(&net, &pure).unwrap().is_empty());
        assert!(pure.rate() >= code.rate() - 1.0 / code.block_length() as f64);
        let kept: Vec<_> = pure.codebook().to_vec();
        assert_eq!(kept, vec![code.codeword(0).to_vec(), code.codeword(1).to_vec(), code.codeword(3).to_vec()]);
    }

    #[test]
    fn purify_rejects_half_faulty() {
        let net = fixtures::diamond();
        let code = fixtures::diamond_code(&net);
        let bad = corrupt(&code, &net, &[0, 3]);
        match purify_zero_error(&net, &bad) {
            Err(DsnError::TooManyErrors { delta }) => assert_eq!(delta, 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn product_code_shapes() {
        let net = fixtures::diamond();
        let code = fixtures::diamond_code(&net);
        let one = build_product_code(&code, 1).unwrap();
        assert_eq!(one.len(), code.len());
        for i in 0..code.len() {
            assert_eq!(one.codeword(i), code.codeword(i));
        }
        let two_word = RelayCode::new(
            code.bit_depth(),
            1,
            code.block_length(),
            code.codebook()[..2].to_vec(),
            code.relay_maps().clone(),
            BTreeMap::new(),
        )
        .unwrap();
        let triple = build_product_code(&two_word, 3).unwrap();
        assert_eq!(triple.len(), 8);
        assert!((0..8).all(|i| triple.codeword(i).len() == 3 * code.block_length()));
        assert_eq!(triple.digits(6), vec![1, 1, 0]);
        assert_eq!(triple.index_of(&[1, 1, 0]), 6);
        assert_eq!(triple.rate(), two_word.rate());
    }

    fn check_product_blocks(net: &RelayNetwork, code: &RelayCode, reps: usize) {
        let product = build_product_code(code, reps).unwrap();
        let runner = DsnRunner::new(net, code).unwrap();
        let base: Vec<NetworkTrace> = runner.run_all();
        for index in 0..product.len() {
            let trace = run_product(net, &product, index).unwrap();
            for (k, &m) in product.digits(index).iter().enumerate() {
                let (tx, rx) = trace.block(k, code.block_length());
                assert_eq!(tx[1..], base[m].transmitted[1..]);
                assert_eq!(rx[1..], base[m].received[1..]);
                assert_eq!(trace.decoded[k], Some(m));
            }
        }
    }

    #[test]
    fn layered_product_trace_is_blockwise() {
        let net = fixtures::diamond();
        check_product_blocks(&net, &fixtures::diamond_code(&net), 3);
    }

    #[test]
    fn interleaved_product_trace_is_blockwise() {
        let net = fixtures::nonlayered();
        let code = search_base_code(&net, 3, 1.0 / 3.0, 30, 5).unwrap().expect("code exists");
        check_product_blocks(&net, &code, 3);
        let product = build_product_code(&code, 3).unwrap();
        let trace = run_product(&net, &product, 5).unwrap();
        // Two relays read every block except the last.
        assert_eq!(trace.causal_reads, 2 * 2);
    }

    #[test]
    fn interleave_examples() {
        let words = vec![vec!['a', 'b']];
        assert_eq!(interleave(&words).unwrap(), vec![vec!['a'], vec!['b']]);
        let words = vec![vec!["a1", "a2"], vec!["b1", "b2"]];
        assert_eq!(interleave(&words).unwrap(), vec![vec!["a1", "b1"], vec!["a2", "b2"]]);
        assert!(matches!(
            interleave(&[vec![1, 2], vec![3]]),
            Err(DsnError::LengthMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn causal_buffer_refuses_future_reads() {
        let mut buffer = CausalBuffer::new();
        buffer.push(1);
        buffer.push(2);
        assert_eq!(*buffer.read_before(0, 1).unwrap(), 1);
        assert!(matches!(buffer.read_before(1, 1), Err(DsnError::CausalityViolation { read: 1, emitting: 1 })));
        assert!(buffer.read_before(2, 5).is_err());
        assert_eq!(buffer.reads(), 1);
    }

    #[test]
    fn search_line_rate_one() {
        let net = fixtures::line(2.0, 2.0);
        let code = search_base_code(&net, 1, 1.0, 10, 1).unwrap().expect("found");
        assert_eq!(code.len(), 2);
        // Exhaustive oracle: destination receptions of the two codewords differ.
        let receptions: BTreeSet<_> =
            (0..2).map(|m| run_dsn(&net, &code, m).unwrap().received[2].clone()).collect();
        assert_eq!(receptions.len(), 2);
        assert!((0..2).all(|m| run_dsn(&net, &code, m).unwrap().is_correct()));
    }

    /// Largest number of distinct destination receptions over every codeword
    /// and every lookup-table relay map of the gain-2 line network, N = 1.
    fn line_zero_error_max() -> usize {
        let net = fixtures::line(2.0, 2.0);
        let symbols = tx_alphabet(1, 1).unwrap();
        let receptions: Vec<RxSymbol> = reception_alphabet(&net, 1, 64).unwrap().into_iter().collect();
        let mut best = 0;
        let maps = symbols.len().pow(receptions.len() as u32);
        for code in 0..maps {
            let mut c = code;
            let entries: BTreeMap<RxSymbol, TxSymbol> = receptions
                .iter()
                .map(|y| {
                    let x = symbols[c % symbols.len()].clone();
                    c /= symbols.len();
                    (y.clone(), x)
                })
                .collect();
            let map = RelayMap::Table { entries, default: sym(0, 0, 1) };
            let relay = BTreeMap::from([(1, map)]);
            let engine = Engine::new(&net, 1, 1, &relay).unwrap();
            let distinct: BTreeSet<_> =
                symbols.iter().map(|x| engine.execute(&[x.clone()]).received[2].clone()).collect();
            best = best.max(distinct.len());
        }
        best
    }

    #[test]
    fn search_respects_zero_error_capacity() {
        let max = line_zero_error_max();
        assert_eq!(max, 4);
        let net = fixtures::line(2.0, 2.0);
        let above = (max as f64).log2() + 1.0;
        assert!(search_base_code(&net, 1, above, 30, 3).unwrap().is_none());
        assert!(search_base_code(&net, 1, (max as f64).log2(), 30, 3).unwrap().is_some());
    }

    #[test]
    fn search_rate_zero_is_single_codeword() {
        let net = fixtures::diamond();
        let code = search_base_code(&net, 2, 0.0, 1, 9).unwrap().expect("found");
        assert_eq!(code.len(), 1);
        assert_eq!(code.rate(), 0.0);
    }

    #[test]
    fn search_rejects_fractional_message_bits() {
        let net = fixtures::diamond();
        assert!(matches!(search_base_code(&net, 2, 0.75, 1, 0), Err(DsnError::InvalidCode(_))));
    }

    #[test]
    fn code_json_roundtrip() {
        let net = fixtures::diamond();
        let code = fixtures::diamond_code(&net);
        let text = save_code(&code);
        assert_eq!(load_code(&text).unwrap(), code);
        let table = RelayCode::new(
            1,
            1,
            1,
            vec![vec![sym(1, 0, 1)]],
            BTreeMap::from([(
                1,
                RelayMap::Table { entries: BTreeMap::from([(rx(1, 0), sym(0, 1, 1))]), default: sym(0, 0, 1) },
            )]),
            BTreeMap::from([(vec![rx(0, 1)], 0)]),
        )
        .unwrap();
        assert_eq!(load_code(&save_code(&table)).unwrap(), table);
        assert!(load_code(&text.replace("\"format\": 1", "\"format\": 2")).is_err());
    }

    #[test]
    fn relay_map_families() {
        let y = [GaussianInteger::new(13, -3)];
        let qf = RelayMap::QuantizeForward { shift: 1 }.apply(&y, 2);
        // floor(13 / 2) = 6 -> 2 (mod 4); floor(-3 / 2) = -2 -> 2 (mod 4)
        assert_eq!(qf, vec![DiscreteSymbol::new(2, 2, 2).unwrap()]);
        let modulo = RelayMap::Modulo { multiplier: 3 }.apply(&y, 2);
        // 39 mod 4 = 3; -9 mod 4 = 3
        assert_eq!(modulo, vec![DiscreteSymbol::new(3, 3, 2).unwrap()]);
    }

    proptest! {
        #[test]
        fn interleave_roundtrip(words in (1usize..6, 1usize..6).prop_flat_map(|(n, len)|
            proptest::collection::vec(proptest::collection::vec(any::<u16>(), len), n))) {
            let blocks = interleave(&words).unwrap();
            prop_assert_eq!(blocks.len(), words[0].len());
            prop_assert_eq!(deinterleave(&blocks).unwrap(), words);
        }
    }
}
