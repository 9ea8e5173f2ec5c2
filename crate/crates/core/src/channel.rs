//! Complex channel arithmetic shared by the Gaussian network and its discrete
//! superposition counterpart.
//!
//! The superposition channel is evaluated in exact fixed point: an input
//! component is an integer numerator over `2^n`, a quantized gain is a Gaussian
//! integer, so every product `h' * x` is an exact rational with denominator
//! `2^n`. Truncation toward zero is then an integer division. Nothing on the
//! deterministic path touches floating point.
//!
//! The Gaussian channel and the perturbation terms of [`decompose_received`]
//! are floating point. The decomposition uses the component-wise floor `Q`
//! (not truncation) and defines the carry as the exact integer residual, so
//! `Q(y) = y' + Q(v) + Q(z) + c` holds for every input.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported bit depth for superposition inputs.
pub const MAX_BIT_DEPTH: u32 = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("gain list is empty")]
    EmptyGainList,
    #[error("no gain component has magnitude of at least 1")]
    GainBelowUnit,
    #[error("gain component is not finite")]
    NonFiniteGain,
    #[error("length mismatch: {inputs} inputs for {gains} gains")]
    LengthMismatch { inputs: usize, gains: usize },
    #[error("antenna mismatch: expected {expected}, found {found}")]
    AntennaMismatch { expected: usize, found: usize },
    #[error("bit depth mismatch: {expected} vs {found}")]
    BitDepthMismatch { expected: u32, found: u32 },
    #[error("bit depth {0} outside 1..={MAX_BIT_DEPTH}")]
    InvalidBitDepth(u32),
    #[error("fraction numerator {numerator} does not fit in {bit_depth} bits")]
    FractionOutOfRange { numerator: u32, bit_depth: u32 },
}

pub type Result<T> = std::result::Result<T, ChannelError>;

/// Complex channel coefficient of the Gaussian network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexGain {
    pub re: f64,
    pub im: f64,
}

impl ComplexGain {
    pub const ZERO: ComplexGain = ComplexGain { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        ComplexGain { re, im }
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }

    /// `max(|re|, |im|)`.
    pub fn max_component(&self) -> f64 {
        self.re.abs().max(self.im.abs())
    }
}

/// Gaussian-integer gain of the superposition network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantizedGain {
    pub re: i64,
    pub im: i64,
}

impl QuantizedGain {
    pub fn new(re: i64, im: i64) -> Self {
        QuantizedGain { re, im }
    }
}

impl fmt::Display for QuantizedGain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_complex(f, self.re, self.im)
    }
}

/// Superposition input: each component is `k * 2^-n` with `k < 2^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiscreteSymbol {
    re_bits: u32,
    im_bits: u32,
    bit_depth: u32,
}

impl DiscreteSymbol {
    pub fn new(re_bits: u32, im_bits: u32, bit_depth: u32) -> Result<Self> {
        check_bit_depth(bit_depth)?;
        for numerator in [re_bits, im_bits] {
            if u64::from(numerator) >= 1u64 << bit_depth {
                return Err(ChannelError::FractionOutOfRange { numerator, bit_depth });
            }
        }
        Ok(DiscreteSymbol { re_bits, im_bits, bit_depth })
    }

    pub fn zero(bit_depth: u32) -> Result<Self> {
        Self::new(0, 0, bit_depth)
    }

    /// Symbol number `index` of the alphabet in lexicographic (re, im) order.
    pub fn from_index(index: u64, bit_depth: u32) -> Result<Self> {
        check_bit_depth(bit_depth)?;
        let side = 1u64 << bit_depth;
        if index >= side * side {
            return Err(ChannelError::FractionOutOfRange {
                numerator: u32::try_from(index).unwrap_or(u32::MAX),
                bit_depth,
            });
        }
        Self::new((index / side) as u32, (index % side) as u32, bit_depth)
    }

    /// Position of this symbol in the lexicographic alphabet order.
    pub fn index(&self) -> u64 {
        (u64::from(self.re_bits) << self.bit_depth) | u64::from(self.im_bits)
    }

    /// Number of complex symbols at a given bit depth, `4^n`.
    pub fn alphabet_size(bit_depth: u32) -> u64 {
        1u64 << (2 * bit_depth)
    }

    /// All `4^n` symbols in lexicographic order.
    pub fn alphabet(bit_depth: u32) -> Result<Vec<DiscreteSymbol>> {
        check_bit_depth(bit_depth)?;
        (0..Self::alphabet_size(bit_depth))
            .map(|i| Self::from_index(i, bit_depth))
            .collect()
    }

    pub fn re_bits(&self) -> u32 {
        self.re_bits
    }

    pub fn im_bits(&self) -> u32 {
        self.im_bits
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    pub fn re(&self) -> f64 {
        f64::from(self.re_bits) / (1u64 << self.bit_depth) as f64
    }

    pub fn im(&self) -> f64 {
        f64::from(self.im_bits) / (1u64 << self.bit_depth) as f64
    }

    /// Binary expansion `x(1), ..., x(n)` of the real part, most significant first.
    pub fn re_expansion(&self) -> Vec<u8> {
        expansion(self.re_bits, self.bit_depth)
    }

    /// Binary expansion of the imaginary part, most significant first.
    pub fn im_expansion(&self) -> Vec<u8> {
        expansion(self.im_bits, self.bit_depth)
    }

    pub fn to_gaussian(&self) -> GaussianSymbol {
        GaussianSymbol::new(self.re(), self.im())
    }

    /// `|x|^2`.
    pub fn power(&self) -> f64 {
        self.re() * self.re() + self.im() * self.im()
    }
}

fn expansion(bits: u32, depth: u32) -> Vec<u8> {
    (1..=depth).map(|k| ((bits >> (depth - k)) & 1) as u8).collect()
}

fn check_bit_depth(bit_depth: u32) -> Result<()> {
    if bit_depth == 0 || bit_depth > MAX_BIT_DEPTH {
        Err(ChannelError::InvalidBitDepth(bit_depth))
    } else {
        Ok(())
    }
}

/// Complex sample of the Gaussian network (transmitted, received or noise).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GaussianSymbol {
    pub re: f64,
    pub im: f64,
}

impl GaussianSymbol {
    pub const ZERO: GaussianSymbol = GaussianSymbol { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        GaussianSymbol { re, im }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    /// Component-wise floor.
    pub fn floor(&self) -> GaussianInteger {
        GaussianInteger::new(self.re.floor() as i64, self.im.floor() as i64)
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl Add for GaussianSymbol {
    type Output = GaussianSymbol;
    fn add(self, rhs: Self) -> Self {
        GaussianSymbol::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl AddAssign for GaussianSymbol {
    fn add_assign(&mut self, rhs: Self) {
        self.re += rhs.re;
        self.im += rhs.im;
    }
}

impl Sub for GaussianSymbol {
    type Output = GaussianSymbol;
    fn sub(self, rhs: Self) -> Self {
        GaussianSymbol::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Mul<GaussianSymbol> for ComplexGain {
    type Output = GaussianSymbol;
    fn mul(self, x: GaussianSymbol) -> GaussianSymbol {
        GaussianSymbol::new(self.re * x.re - self.im * x.im, self.re * x.im + self.im * x.re)
    }
}

/// Element of `Z + iZ`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub struct GaussianInteger {
    pub re: i64,
    pub im: i64,
}

impl GaussianInteger {
    pub const ZERO: GaussianInteger = GaussianInteger { re: 0, im: 0 };

    pub fn new(re: i64, im: i64) -> Self {
        GaussianInteger { re, im }
    }

    pub fn to_gaussian(&self) -> GaussianSymbol {
        GaussianSymbol::new(self.re as f64, self.im as f64)
    }
}

impl Add for GaussianInteger {
    type Output = GaussianInteger;
    fn add(self, rhs: Self) -> Self {
        GaussianInteger::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl AddAssign for GaussianInteger {
    fn add_assign(&mut self, rhs: Self) {
        self.re += rhs.re;
        self.im += rhs.im;
    }
}

impl Sub for GaussianInteger {
    type Output = GaussianInteger;
    fn sub(self, rhs: Self) -> Self {
        GaussianInteger::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl fmt::Display for GaussianInteger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_complex(f, self.re, self.im)
    }
}

fn write_complex(f: &mut fmt::Formatter<'_>, re: i64, im: i64) -> fmt::Result {
    if im < 0 {
        write!(f, "{re}-{}i", -(im as i128))
    } else {
        write!(f, "{re}+{im}i")
    }
}

/// Split of a Gaussian reception into its superposition part and perturbations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    /// Received signal of the Gaussian channel.
    pub y: GaussianSymbol,
    /// Reception of the superposition channel.
    pub y_prime: GaussianInteger,
    /// Aggregate perturbation from gain quantization and product truncation.
    pub v: GaussianSymbol,
    pub z: GaussianSymbol,
    /// Integer carry, `Q(y) - y' - Q(v) - Q(z)`.
    pub c: GaussianInteger,
}

impl Decomposition {
    /// Right-hand side `y' + Q(v) + Q(z) + c` of the reconstruction identity.
    pub fn reconstruct(&self) -> GaussianInteger {
        self.y_prime + self.v.floor() + self.z.floor() + self.c
    }

    /// Residual `Q(y) - y'`, the quantity a genie would have to supply.
    pub fn genie_residual(&self) -> GaussianInteger {
        self.y.floor() - self.y_prime
    }
}

/// Bit depth `n` of the superposition alphabet: the largest `floor(log2 |c|)`
/// over all gain components with `|c| >= 1`, clamped to at least 1.
pub fn compute_bit_depth(gains: &[ComplexGain]) -> Result<u32> {
    if gains.is_empty() {
        return Err(ChannelError::EmptyGainList);
    }
    let mut depth: Option<i32> = None;
    for gain in gains {
        if !gain.is_finite() {
            return Err(ChannelError::NonFiniteGain);
        }
        for component in [gain.re, gain.im] {
            let magnitude = component.abs();
            if magnitude >= 1.0 {
                let log = floor_log2(magnitude);
                depth = Some(depth.map_or(log, |d| d.max(log)));
            }
        }
    }
    match depth {
        None => Err(ChannelError::GainBelowUnit),
        Some(d) => Ok(d.max(1) as u32),
    }
}

/// `floor(log2 x)` for finite `x >= 1`, read off the binary exponent.
fn floor_log2(x: f64) -> i32 {
    debug_assert!(x >= 1.0 && x.is_finite());
    ((x.to_bits() >> 52) & 0x7ff) as i32 - 1023
}

/// Sign-magnitude truncation of each component: `sign(x) * floor(|x|)`.
pub fn quantize_gain(h: ComplexGain) -> QuantizedGain {
    // `as` saturates, which only matters for gains beyond 2^63.
    QuantizedGain::new(h.re.trunc() as i64, h.im.trunc() as i64)
}

/// Numerators of the exact product `h' * x` over the denominator `2^n`.
fn product_numerators(h: QuantizedGain, x: DiscreteSymbol) -> (i128, i128) {
    let (a, b) = (i128::from(h.re), i128::from(h.im));
    let (p, q) = (i128::from(x.re_bits), i128::from(x.im_bits));
    (a * p - b * q, a * q + b * p)
}

/// `trunc(h' * x)` computed exactly.
pub fn truncated_product(h: QuantizedGain, x: DiscreteSymbol) -> GaussianInteger {
    let (re, im) = product_numerators(h, x);
    let scale = 1i128 << x.bit_depth;
    // Integer division truncates toward zero.
    GaussianInteger::new((re / scale) as i64, (im / scale) as i64)
}

/// Fractional part discarded by [`truncated_product`], `h'x - trunc(h'x)`.
pub fn truncation_residual(h: QuantizedGain, x: DiscreteSymbol) -> GaussianSymbol {
    let (re, im) = product_numerators(h, x);
    let scale = 1i128 << x.bit_depth;
    GaussianSymbol::new(
        (re % scale) as f64 / scale as f64,
        (im % scale) as f64 / scale as f64,
    )
}

fn check_lengths(inputs: usize, gains: usize) -> Result<()> {
    if inputs != gains {
        Err(ChannelError::LengthMismatch { inputs, gains })
    } else {
        Ok(())
    }
}

fn shared_bit_depth(inputs: &[DiscreteSymbol]) -> Result<()> {
    if let Some(first) = inputs.first() {
        if let Some(other) = inputs.iter().find(|x| x.bit_depth != first.bit_depth) {
            return Err(ChannelError::BitDepthMismatch {
                expected: first.bit_depth,
                found: other.bit_depth,
            });
        }
    }
    Ok(())
}

/// Reception of the superposition channel: `sum_i trunc(h'_i x_i)`.
pub fn superposition_output(
    inputs: &[DiscreteSymbol],
    gains: &[QuantizedGain],
) -> Result<GaussianInteger> {
    check_lengths(inputs.len(), gains.len())?;
    shared_bit_depth(inputs)?;
    Ok(inputs
        .iter()
        .zip(gains)
        .fold(GaussianInteger::ZERO, |acc, (&x, &h)| acc + truncated_product(h, x)))
}

/// Reception of the Gaussian channel: `sum_i h_i x_i + z`.
pub fn gaussian_output(
    inputs: &[GaussianSymbol],
    gains: &[ComplexGain],
    noise: GaussianSymbol,
) -> Result<GaussianSymbol> {
    check_lengths(inputs.len(), gains.len())?;
    Ok(inputs.iter().zip(gains).fold(noise, |acc, (&x, &h)| acc + h * x))
}

/// Decompose the Gaussian reception of discrete inputs into the superposition
/// reception `y'`, the perturbation `v`, the noise `z` and the carry `c`.
pub fn decompose_received(
    inputs: &[DiscreteSymbol],
    gains: &[ComplexGain],
    noise: GaussianSymbol,
) -> Result<Decomposition> {
    check_lengths(inputs.len(), gains.len())?;
    let quantized: Vec<QuantizedGain> = gains.iter().map(|&h| quantize_gain(h)).collect();
    let y_prime = superposition_output(inputs, &quantized)?;

    let mut v = GaussianSymbol::ZERO;
    for ((&x, &h), &hq) in inputs.iter().zip(gains).zip(&quantized) {
        let gain_error = ComplexGain::new(h.re - hq.re as f64, h.im - hq.im as f64);
        v += gain_error * x.to_gaussian();
        v += truncation_residual(hq, x);
    }

    let analog: Vec<GaussianSymbol> = inputs.iter().map(DiscreteSymbol::to_gaussian).collect();
    let y = gaussian_output(&analog, gains, noise)?;
    let c = y.floor() - y_prime - v.floor() - noise.floor();
    Ok(Decomposition { y, y_prime, v, z: noise, c })
}

/// 2x2 gain matrix of a MIMO link, indexed `[transmit antenna][receive antenna]`.
pub type MimoGain<T> = [[T; 2]; 2];

/// Superposition reception at both antennas of a 2x2 MIMO receiver.
pub fn superposition_output_mimo(
    inputs: &[[DiscreteSymbol; 2]],
    gains: &[MimoGain<QuantizedGain>],
) -> Result<[GaussianInteger; 2]> {
    check_lengths(inputs.len(), gains.len())?;
    let mut out = [GaussianInteger::ZERO; 2];
    for (l, slot) in out.iter_mut().enumerate() {
        let (xs, hs): (Vec<_>, Vec<_>) = inputs
            .iter()
            .zip(gains)
            .flat_map(|(x, h)| (0..2).map(move |k| (x[k], h[k][l])))
            .unzip();
        *slot = superposition_output(&xs, &hs)?;
    }
    Ok(out)
}

/// Gaussian reception at both antennas of a 2x2 MIMO receiver.
pub fn gaussian_output_mimo(
    inputs: &[[GaussianSymbol; 2]],
    gains: &[MimoGain<ComplexGain>],
    noise: [GaussianSymbol; 2],
) -> Result<[GaussianSymbol; 2]> {
    check_lengths(inputs.len(), gains.len())?;
    let mut out = noise;
    for (x, h) in inputs.iter().zip(gains) {
        for (l, slot) in out.iter_mut().enumerate() {
            *slot += h[0][l] * x[0] + h[1][l] * x[1];
        }
    }
    Ok(out)
}

/// Gain of a directed link: a scalar or a 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkGain {
    Scalar(ComplexGain),
    Mimo(MimoGain<ComplexGain>),
}

impl LinkGain {
    pub fn antennas(&self) -> usize {
        match self {
            LinkGain::Scalar(_) => 1,
            LinkGain::Mimo(_) => 2,
        }
    }

    /// Gain from transmit antenna `k` to receive antenna `l`.
    pub fn entry(&self, k: usize, l: usize) -> ComplexGain {
        match self {
            LinkGain::Scalar(h) => {
                debug_assert!(k == 0 && l == 0);
                *h
            }
            LinkGain::Mimo(m) => m[k][l],
        }
    }

    pub fn components(&self) -> Vec<ComplexGain> {
        match self {
            LinkGain::Scalar(h) => vec![*h],
            LinkGain::Mimo(m) => m.iter().flatten().copied().collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(ComplexGain::is_finite)
    }
}

fn check_antennas(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(ChannelError::AntennaMismatch { expected, found })
    } else {
        Ok(())
    }
}

/// Flatten the per-antenna view of a multi-link reception at receive antenna
/// `l`: one (input, gain) pair per transmitting antenna.
fn antenna_terms<'a, T: Copy>(
    links: &'a [(LinkGain, &'a [T])],
    l: usize,
) -> impl Iterator<Item = (T, ComplexGain)> + 'a {
    links
        .iter()
        .flat_map(move |(gain, x)| (0..gain.antennas()).map(move |k| (x[k], gain.entry(k, l))))
}

fn check_links<T>(links: &[(LinkGain, &[T])], antennas: usize) -> Result<()> {
    for (gain, x) in links {
        check_antennas(antennas, gain.antennas())?;
        check_antennas(antennas, x.len())?;
    }
    Ok(())
}

/// Superposition reception of a receiver with `antennas` antennas fed by the
/// given links, one entry per receive antenna.
pub fn superposition_received(
    links: &[(LinkGain, &[DiscreteSymbol])],
    antennas: usize,
) -> Result<Vec<GaussianInteger>> {
    check_links(links, antennas)?;
    (0..antennas)
        .map(|l| {
            let mut total = GaussianInteger::ZERO;
            for (x, h) in antenna_terms(links, l) {
                total += truncated_product(quantize_gain(h), x);
            }
            Ok(total)
        })
        .collect()
}

/// Gaussian reception of a receiver with `antennas` antennas.
pub fn gaussian_received(
    links: &[(LinkGain, &[GaussianSymbol])],
    noise: &[GaussianSymbol],
) -> Result<Vec<GaussianSymbol>> {
    let antennas = noise.len();
    check_links(links, antennas)?;
    Ok((0..antennas)
        .map(|l| antenna_terms(links, l).fold(noise[l], |acc, (x, h)| acc + h * x))
        .collect())
}

/// Per-antenna decomposition of a multi-link reception.
pub fn decompose_received_links(
    links: &[(LinkGain, &[DiscreteSymbol])],
    noise: &[GaussianSymbol],
) -> Result<Vec<Decomposition>> {
    let antennas = noise.len();
    check_links(links, antennas)?;
    (0..antennas)
        .map(|l| {
            let (xs, hs): (Vec<_>, Vec<_>) = antenna_terms(links, l).unzip();
            decompose_received(&xs, &hs, noise[l])
        })
        .collect()
}
