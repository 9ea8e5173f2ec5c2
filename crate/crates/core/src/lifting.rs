//! Lifting a superposition-network code to the Gaussian network.
//!
//! Every reception unit keeps a uniformly random `2^{-n(Lκ + 2η)}` fraction
//! of its typical reception sequences (`L = N` for whole blocks, `L = 1` for
//! the per-time units of the interleaved schedule). The lifted codebook is
//! the set of product codewords that are jointly typical and whose reception
//! at every unit survives the pruning.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsn::{DsnError, ProductCode};
use crate::seed;
use crate::topology::{AntennaMode, RelayNetwork};
use crate::typicality::{InducedDistribution, ReceptionUnit, TypicalSet, TypicalityError};

/// Format tag of serialized lifted codes.
pub const LIFTED_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum LiftError {
    #[error(
        "pruning empties {unit}: {typical} typical sequences times 2^-{exponent:.3} rounds to zero"
    )]
    EmptyResult { unit: ReceptionUnit, typical: usize, exponent: f64 },
    #[error("invalid lifting parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Typicality(#[from] TypicalityError),
    #[error(transparent)]
    Dsn(#[from] DsnError),
}

pub type Result<T> = std::result::Result<T, LiftError>;

/// Per-node rate loss `log2(12M − 2) + 11` bits per channel use.
pub fn kappa(m: usize) -> f64 {
    (12.0 * m as f64 - 2.0).log2() + 11.0
}

/// Per-node rate loss with two antennas, `2·log2(24M − 2) + 22`.
pub fn kappa_mimo(m: usize) -> f64 {
    2.0 * (24.0 * m as f64 - 2.0).log2() + 22.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaParams {
    pub m: usize,
    pub mode: AntennaMode,
    /// Test-scale value used for pruning instead of the formula.
    pub override_value: Option<f64>,
}

impl KappaParams {
    pub fn new(m: usize, mode: AntennaMode, override_value: Option<f64>) -> Result<Self> {
        if m == 0 {
            return Err(LiftError::InvalidParameter("M must be at least 1".into()));
        }
        if let Some(k) = override_value {
            if !(k.is_finite() && k >= 0.0) {
                return Err(LiftError::InvalidParameter(format!("kappa override {k}")));
            }
        }
        Ok(KappaParams { m, mode, override_value })
    }

    pub fn for_network(net: &RelayNetwork, override_value: Option<f64>) -> Result<Self> {
        Self::new(net.m(), net.antenna_mode(), override_value)
    }

    /// The formula value for this `M` and antenna mode.
    pub fn formula(&self) -> f64 {
        match self.mode {
            AntennaMode::Scalar => kappa(self.m),
            AntennaMode::Mimo2x2 => kappa_mimo(self.m),
        }
    }

    /// The value pruning uses.
    pub fn used(&self) -> f64 {
        self.override_value.unwrap_or_else(|| self.formula())
    }

    pub fn is_overridden(&self) -> bool {
        self.override_value.is_some()
    }
}

/// Pruned set of one reception unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedUnit {
    pub typical: TypicalSet,
    /// Positions into `typical.members()`, ascending.
    selected: Vec<usize>,
}

impl PrunedUnit {
    pub fn unit(&self) -> ReceptionUnit {
        self.typical.unit
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    /// Member `i` of the pruned set as unit value ids.
    pub fn member(&self, i: usize) -> &[usize] {
        &self.typical.members()[self.selected[i]]
    }

    /// Index within the pruned set of a typical-set position.
    pub fn index_of_position(&self, position: usize) -> Option<usize> {
        self.selected.binary_search(&position).ok()
    }

    pub fn index_of(&self, ids: &[usize]) -> Option<usize> {
        self.typical.position(ids).and_then(|p| self.index_of_position(p))
    }

    /// Pruned set with explicitly chosen typical-set positions.
    pub fn from_positions(typical: TypicalSet, mut positions: Vec<usize>) -> PrunedUnit {
        positions.sort_unstable();
        positions.dedup();
        positions.retain(|&p| p < typical.len());
        PrunedUnit { typical, selected: positions }
    }

    /// Subset keeping the `keep` lowest positions.
    pub fn shrink_to(&self, keep: usize) -> PrunedUnit {
        PrunedUnit { typical: self.typical.clone(), selected: self.selected[..keep.min(self.len())].to_vec() }
    }

    /// `log2` bounds reported for the pruned size: `n(H − Lκ − 3ε₂)` below
    /// and `n(H + ε₂)` above.
    pub fn size_bounds_log2(&self, length_factor: usize, kappa: f64) -> (f64, f64) {
        let n = self.typical.length as f64;
        let (h, e2) = (self.typical.entropy, self.typical.epsilon2);
        (n * (h - length_factor as f64 * kappa - 3.0 * e2), n * (h + e2))
    }
}

/// Pruned reception sets of all units.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedSets {
    pub units: Vec<PrunedUnit>,
    pub kappa: KappaParams,
    pub eta: f64,
    pub eta_overridden: bool,
    pub n_rep: usize,
    /// `N` for whole-block units, 1 for interleaved units.
    pub length_factor: usize,
    pub seed: u64,
}

impl PrunedSets {
    /// `n(Lκ + 2η)`: minus the `log2` of the kept fraction.
    pub fn exponent(&self) -> f64 {
        fraction_exponent(self.n_rep, self.length_factor, self.kappa.used(), self.eta)
    }

    pub fn with_units(&self, units: Vec<PrunedUnit>) -> PrunedSets {
        PrunedSets { units, ..self.clone() }
    }
}

fn fraction_exponent(n_rep: usize, length_factor: usize, kappa: f64, eta: f64) -> f64 {
    n_rep as f64 * (length_factor as f64 * kappa + 2.0 * eta)
}

/// Default `η`: the largest `ε₂` among the typical sets.
pub fn default_eta(typical_sets: &[TypicalSet]) -> f64 {
    typical_sets.iter().map(|t| t.epsilon2).fold(0.0, f64::max)
}

/// Size kept from `typical` sequences: `round(|T|·2^{-exponent})`, half
/// away from zero.
pub fn pruned_size(typical: usize, exponent: f64) -> usize {
    (typical as f64 * (-exponent).exp2()).round() as usize
}

/// Uniformly random subsets of the prescribed size, one independent stream
/// per unit (`derive_seed(seed, unit index)`).
pub fn prune_sets(
    typical_sets: Vec<TypicalSet>,
    kappa: KappaParams,
    eta: Option<f64>,
    n_rep: usize,
    length_factor: usize,
    seed: u64,
) -> Result<PrunedSets> {
    if let Some(e) = eta {
        if !(e.is_finite() && e >= 0.0) {
            return Err(LiftError::InvalidParameter(format!("eta {e}")));
        }
    }
    let eta_value = eta.unwrap_or_else(|| default_eta(&typical_sets));
    let exponent = fraction_exponent(n_rep, length_factor, kappa.used(), eta_value);
    let units = typical_sets
        .into_iter()
        .enumerate()
        .map(|(u, typical)| {
            let size = pruned_size(typical.len(), exponent);
            if size == 0 {
                return Err(LiftError::EmptyResult { unit: typical.unit, typical: typical.len(), exponent });
            }
            let mut rng = seed::stream_rng(seed, u as u64);
            let mut positions: Vec<usize> = (0..typical.len()).collect();
            let (chosen, _) = positions.partial_shuffle(&mut rng, size);
            let mut selected = chosen.to_vec();
            selected.sort_unstable();
            Ok(PrunedUnit { typical, selected })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrunedSets { units, kappa, eta: eta_value, eta_overridden: eta.is_some(), n_rep, length_factor, seed })
}

/// Jointly typical product codewords with their typical-set positions,
/// reusable across pruning draws.
#[derive(Debug, Clone)]
pub struct LiftingContext {
    c0_len: usize,
    units: Vec<ReceptionUnit>,
    /// `(C₀ index, typical-set position per unit)`, ascending index.
    candidates: Vec<(usize, Vec<usize>)>,
}

impl LiftingContext {
    pub fn new(
        induced: &InducedDistribution,
        product: &ProductCode,
        typical_sets: &[TypicalSet],
        epsilon: f64,
    ) -> Self {
        let joint = induced.joint();
        let tuple_dist = joint.tuple_distribution();
        let tuples = tuple_dist.support().to_vec();
        let probs = tuple_dist.probs().to_vec();
        let messages = product.base().len();
        let tuple_of: Vec<usize> = (0..messages)
            .map(|m| tuples.binary_search_by(|t| t.as_slice().cmp(induced.row(m))).expect("row in law"))
            .collect();
        let n = product.repetitions() as f64;
        let candidates = (0..product.len())
            .into_par_iter()
            .filter_map(|index| {
                let digits = product.digits(index);
                let mut counts = vec![0usize; tuples.len()];
                for &m in &digits {
                    counts[tuple_of[m]] += 1;
                }
                let typical = counts.iter().zip(&probs).all(|(&c, &p)| {
                    let freq = c as f64 / n;
                    (freq - p).abs() <= epsilon * p + 4.0 * f64::EPSILON * p.max(freq)
                });
                if !typical {
                    return None;
                }
                let positions = typical_sets
                    .iter()
                    .enumerate()
                    .map(|(u, set)| set.position(&induced.reception_ids(&digits, u)))
                    .collect::<Option<Vec<usize>>>()?;
                Some((index, positions))
            })
            .collect();
        LiftingContext { c0_len: product.len(), units: induced.units().to_vec(), candidates }
    }

    /// Number of jointly typical product codewords.
    pub fn joint_typical(&self) -> usize {
        self.candidates.len()
    }

    pub fn lift(&self, pruned: &PrunedSets) -> LiftedCode {
        let kept: Vec<(usize, Vec<usize>)> = self
            .candidates
            .par_iter()
            .filter_map(|(index, positions)| {
                let provenance = pruned
                    .units
                    .iter()
                    .zip(positions)
                    .map(|(unit, &p)| unit.index_of_position(p))
                    .collect::<Option<Vec<usize>>>()?;
                Some((*index, provenance))
            })
            .collect();
        let (codewords, provenance) = kept.into_iter().unzip();
        LiftedCode {
            codewords,
            provenance,
            pruned: pruned.clone(),
            c0_len: self.c0_len,
            joint_typical: self.candidates.len(),
            units: self.units.clone(),
        }
    }
}

/// The lifted codebook `C_G` together with the pruned sets defining it.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedCode {
    /// Product-code indices, ascending.
    pub codewords: Vec<usize>,
    /// Per codeword, per unit: index of its reception within the pruned set.
    pub provenance: Vec<Vec<usize>>,
    pub pruned: PrunedSets,
    pub c0_len: usize,
    pub joint_typical: usize,
    pub units: Vec<ReceptionUnit>,
}

impl LiftedCode {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn position(&self, c0_index: usize) -> Option<usize> {
        self.codewords.binary_search(&c0_index).ok()
    }
}

/// Intersection of the preimages of the pruned sets within the jointly
/// typical part of the product code.
pub fn build_lifted_code(
    induced: &InducedDistribution,
    product: &ProductCode,
    pruned: &PrunedSets,
    epsilon: f64,
) -> LiftedCode {
    let typical: Vec<TypicalSet> = pruned.units.iter().map(|u| u.typical.clone()).collect();
    LiftingContext::new(induced, product, &typical, epsilon).lift(pruned)
}

/// Rate accounting of a lifted code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub codewords: usize,
    pub product_codewords: usize,
    pub joint_typical: usize,
    pub n_rep: usize,
    pub block_length: usize,
    pub m: usize,
    pub base_rate: f64,
    /// `log2|C_G| / (nN)`; zero for an empty or single-codeword code.
    pub achieved_rate: f64,
    pub gap: f64,
    pub kappa_formula: f64,
    pub kappa_used: f64,
    pub kappa_overridden: bool,
    pub eta: f64,
    pub eta_overridden: bool,
    /// `R − Mκ`.
    pub predicted_rate: f64,
    /// `log2|C₀| − M·n·N·κ`.
    pub target_log2: f64,
    pub log2_codewords: Option<f64>,
    /// Envelope slack `ε_M` in bits: loss to joint typicality plus the
    /// deviation of each unit's kept fraction from `2^{-nLκ}`.
    pub epsilon_m: f64,
    pub residual: Option<f64>,
}

impl RateReport {
    pub fn within_envelope(&self, extra: f64) -> bool {
        self.residual.is_some_and(|r| r.abs() <= self.epsilon_m + extra)
    }
}

/// `ε_M = (log2|C₀| − log2|T|) + Σ_u |log2(|S_u|/|T_u|) + nLκ|`, which
/// bounds `|log2 E|C_G| − target|` exactly.
pub fn epsilon_m(lifted: &LiftedCode) -> f64 {
    let pruned = &lifted.pruned;
    let per_unit = pruned.n_rep as f64 * pruned.length_factor as f64 * pruned.kappa.used();
    let loss = (lifted.c0_len as f64).log2() - (lifted.joint_typical.max(1) as f64).log2();
    loss + pruned
        .units
        .iter()
        .map(|u| ((u.len() as f64).log2() - (u.typical.len() as f64).log2() + per_unit).abs())
        .sum::<f64>()
}

pub fn rate_report(lifted: &LiftedCode, base_rate: f64, block_length: usize) -> RateReport {
    let pruned = &lifted.pruned;
    let n_rep = pruned.n_rep;
    let m = pruned.kappa.m;
    let uses = (n_rep * block_length) as f64;
    let log2_codewords = (!lifted.is_empty()).then(|| (lifted.len() as f64).log2());
    let achieved_rate = log2_codewords.unwrap_or(0.0) / uses;
    let kappa_used = pruned.kappa.used();
    let target_log2 = (lifted.c0_len as f64).log2() - m as f64 * uses * kappa_used;
    RateReport {
        codewords: lifted.len(),
        product_codewords: lifted.c0_len,
        joint_typical: lifted.joint_typical,
        n_rep,
        block_length,
        m,
        base_rate,
        achieved_rate,
        gap: base_rate - achieved_rate,
        kappa_formula: pruned.kappa.formula(),
        kappa_used,
        kappa_overridden: pruned.kappa.is_overridden(),
        eta: pruned.eta,
        eta_overridden: pruned.eta_overridden,
        predicted_rate: base_rate - m as f64 * kappa_used,
        target_log2,
        log2_codewords,
        epsilon_m: epsilon_m(lifted),
        residual: log2_codewords.map(|l| l - target_log2),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitDoc {
    unit: ReceptionUnit,
    typical_size: usize,
    alphabet: Vec<Vec<Vec<[i64; 2]>>>,
    members: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LiftedDoc {
    format: u32,
    seed: u64,
    n_rep: usize,
    length_factor: usize,
    m: usize,
    antenna_mode: AntennaMode,
    kappa_formula: f64,
    kappa_used: f64,
    kappa_overridden: bool,
    eta: f64,
    eta_overridden: bool,
    epsilon: f64,
    product_codewords: usize,
    codewords: Vec<usize>,
    provenance: Vec<Vec<usize>>,
    units: Vec<UnitDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, String>,
}

/// JSON form of the lifted code: codeword indices into the product code,
/// the pruned set of every unit (members as ids into the unit alphabet),
/// provenance, seeds and κ values. `metadata` is copied verbatim.
pub fn save_lifted_code(lifted: &LiftedCode, metadata: &BTreeMap<String, String>) -> String {
    let pruned = &lifted.pruned;
    let doc = LiftedDoc {
        format: LIFTED_FORMAT,
        seed: pruned.seed,
        n_rep: pruned.n_rep,
        length_factor: pruned.length_factor,
        m: pruned.kappa.m,
        antenna_mode: pruned.kappa.mode,
        kappa_formula: pruned.kappa.formula(),
        kappa_used: pruned.kappa.used(),
        kappa_overridden: pruned.kappa.is_overridden(),
        eta: pruned.eta,
        eta_overridden: pruned.eta_overridden,
        epsilon: pruned.units.first().map_or(0.0, |u| u.typical.epsilon),
        product_codewords: lifted.c0_len,
        codewords: lifted.codewords.clone(),
        provenance: lifted.provenance.clone(),
        units: pruned
            .units
            .iter()
            .map(|u| UnitDoc {
                unit: u.unit(),
                typical_size: u.typical.len(),
                alphabet: u
                    .typical
                    .alphabet()
                    .iter()
                    .map(|block| block.iter().map(|y| y.iter().map(|g| [g.re, g.im]).collect()).collect())
                    .collect(),
                members: (0..u.len()).map(|i| u.member(i).to_vec()).collect(),
            })
            .collect(),
        metadata: metadata.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("lifted code serializes");
    text.push('\n');
    text
}
