//! Sparse multi-mode spin-photon state vectors.
//!
//! A [`BasisKet`] is one classical configuration: the emitter spin plus the
//! photon count in every occupied mode. A [`PureState`] is a sparse complex
//! superposition of kets, and a [`Mixture`] is a probability-weighted list of
//! pure states, which is what tracing out loss modes produces.
//!
//! Modes are either time-bin modes addressed by `(vertex, qubit, bin,
//! channel)` or detector-side dual-rail ports. Channels distinguish the
//! resonant H photon from the detuned H photon, the orthogonally polarised V
//! photon and the loss environment, so error branches stay orthogonal without
//! any extra bookkeeping.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use num_complex::Complex64;
use thiserror::Error;

/// Terms with an amplitude magnitude below this are dropped.
pub const PRUNE_TOLERANCE: f64 = 1e-14;

/// Tolerance on the norm of every public state.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Cap on the photon number of a single time-bin mode.
pub const MAX_BIN_OCCUPATION: u8 = 2;

/// Cap on the photon number of a single detector port. Four photons is the
/// most a two-qubit fusion input can carry.
pub const MAX_PORT_OCCUPATION: u8 = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FockError {
    #[error("occupation overflow: mode {mode} would hold {count} photons")]
    Overflow { mode: Mode, count: u32 },
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("target state contains loss-channel occupations")]
    InvalidTarget,
    #[error("loss channel is not a valid {0}")]
    InvalidChannel(&'static str),
    #[error("mixture probabilities sum to {0}, expected 1")]
    BadMixture(f64),
    #[error("spin-free state expected, found a spin-up term")]
    SpinPresent,
    #[error("mode sets overlap between product factors")]
    OverlappingModes,
}

pub type Result<T> = std::result::Result<T, FockError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Spin {
    Down,
    Up,
}

impl Spin {
    pub fn flipped(self) -> Spin {
        match self {
            Spin::Down => Spin::Up,
            Spin::Up => Spin::Down,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Spin::Down => "down",
            Spin::Up => "up",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimeBin {
    Early,
    Late,
}

impl TimeBin {
    pub fn label(self) -> &'static str {
        match self {
            TimeBin::Early => "early",
            TimeBin::Late => "late",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    /// Photon from the driven cycling transition.
    ResonantH,
    /// Co-polarised photon from the off-resonant transition.
    DetunedH,
    /// Orthogonally polarised photon accompanying an unwanted spin flip.
    OrthogonalV,
    /// Environment mode a lost photon was scattered into.
    Loss,
}

impl Channel {
    pub const OPTICAL: [Channel; 3] = [Channel::ResonantH, Channel::DetunedH, Channel::OrthogonalV];

    pub fn label(self) -> &'static str {
        match self {
            Channel::ResonantH => "resonant_H",
            Channel::DetunedH => "detuned_H",
            Channel::OrthogonalV => "orthogonal_V",
            Channel::Loss => "loss",
        }
    }
}

/// A time-bin mode. Field order fixes the canonical ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeAddress {
    pub vertex: usize,
    pub qubit: usize,
    pub bin: TimeBin,
    pub channel: Channel,
}

impl ModeAddress {
    pub fn new(vertex: usize, qubit: usize, bin: TimeBin, channel: Channel) -> Self {
        ModeAddress {
            vertex,
            qubit,
            bin,
            channel,
        }
    }

    pub fn resonant(vertex: usize, qubit: usize, bin: TimeBin) -> Self {
        Self::new(vertex, qubit, bin, Channel::ResonantH)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Port {
    A,
    B,
    C,
    D,
}

impl Port {
    pub const ALL: [Port; 4] = [Port::A, Port::B, Port::C, Port::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Port::A => "A",
            Port::B => "B",
            Port::C => "C",
            Port::D => "D",
        }
    }
}

/// A detector-side mode of the fusion circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DualRailMode {
    pub port: Port,
    pub channel: Channel,
}

impl DualRailMode {
    pub fn new(port: Port, channel: Channel) -> Result<Self> {
        if channel == Channel::Loss {
            return Err(FockError::InvalidChannel("dual-rail channel"));
        }
        Ok(DualRailMode { port, channel })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Bin(ModeAddress),
    Rail(DualRailMode),
}

impl Mode {
    pub fn is_loss(&self) -> bool {
        matches!(self, Mode::Bin(a) if a.channel == Channel::Loss)
    }

    pub fn channel(&self) -> Channel {
        match self {
            Mode::Bin(a) => a.channel,
            Mode::Rail(r) => r.channel,
        }
    }

    fn cap(&self) -> u8 {
        match self {
            Mode::Bin(_) => MAX_BIN_OCCUPATION,
            Mode::Rail(_) => MAX_PORT_OCCUPATION,
        }
    }
}

impl From<ModeAddress> for Mode {
    fn from(a: ModeAddress) -> Self {
        Mode::Bin(a)
    }
}

impl From<DualRailMode> for Mode {
    fn from(r: DualRailMode) -> Self {
        Mode::Rail(r)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Bin(a) => write!(
                f,
                "({},{},{},{})",
                a.vertex,
                a.qubit,
                a.bin.label(),
                a.channel.label()
            ),
            Mode::Rail(r) => write!(f, "({},{})", r.port.label(), r.channel.label()),
        }
    }
}

/// One classical configuration. Occupations are kept sorted by mode and only
/// nonzero counts are stored, so derived equality and ordering are canonical.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisKet {
    spin: Spin,
    occupations: Vec<(Mode, u8)>,
}

impl BasisKet {
    pub fn vacuum(spin: Spin) -> Self {
        BasisKet {
            spin,
            occupations: Vec::new(),
        }
    }

    pub fn from_occupations<I>(spin: Spin, occupations: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Mode, u8)>,
    {
        let mut ket = BasisKet::vacuum(spin);
        for (mode, count) in occupations {
            ket = ket.with_added(mode, count)?;
        }
        Ok(ket)
    }

    pub fn spin(&self) -> Spin {
        self.spin
    }

    pub fn occupation(&self, mode: &Mode) -> u8 {
        match self.occupations.binary_search_by(|(m, _)| m.cmp(mode)) {
            Ok(i) => self.occupations[i].1,
            Err(_) => 0,
        }
    }

    pub fn occupations(&self) -> impl Iterator<Item = (&Mode, u8)> {
        self.occupations.iter().map(|(m, n)| (m, *n))
    }

    pub fn total_photons(&self) -> u32 {
        self.occupations.iter().map(|(_, n)| u32::from(*n)).sum()
    }

    pub fn with_spin(&self, spin: Spin) -> Self {
        BasisKet {
            spin,
            occupations: self.occupations.clone(),
        }
    }

    /// Sets the photon number of `mode`, removing it when `count` is zero.
    pub fn with_occupation(&self, mode: Mode, count: u8) -> Result<Self> {
        if count > mode.cap() {
            return Err(FockError::Overflow {
                mode,
                count: u32::from(count),
            });
        }
        let mut occupations = self.occupations.clone();
        match occupations.binary_search_by(|(m, _)| m.cmp(&mode)) {
            Ok(i) if count == 0 => {
                occupations.remove(i);
            }
            Ok(i) => occupations[i].1 = count,
            Err(_) if count == 0 => {}
            Err(i) => occupations.insert(i, (mode, count)),
        }
        Ok(BasisKet {
            spin: self.spin,
            occupations,
        })
    }

    pub fn with_added(&self, mode: Mode, count: u8) -> Result<Self> {
        let total = u32::from(self.occupation(&mode)) + u32::from(count);
        if total > u32::from(mode.cap()) {
            return Err(FockError::Overflow { mode, count: total });
        }
        self.with_occupation(mode, total as u8)
    }

    /// Keeps only the modes matching `keep`.
    pub fn filtered<F: Fn(&Mode) -> bool>(&self, keep: F) -> Self {
        BasisKet {
            spin: self.spin,
            occupations: self
                .occupations
                .iter()
                .filter(|(m, _)| keep(m))
                .cloned()
                .collect(),
        }
    }

    /// Rewrites every mode through `f`; used for relabelling.
    pub fn remapped<F: Fn(&Mode) -> Mode>(&self, f: F) -> Result<Self> {
        BasisKet::from_occupations(self.spin, self.occupations.iter().map(|(m, n)| (f(m), *n)))
    }

    pub fn has_loss(&self) -> bool {
        self.occupations.iter().any(|(m, _)| m.is_loss())
    }
}

impl fmt::Display for BasisKet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{};", self.spin.label())?;
        for (mode, count) in &self.occupations {
            write!(f, " {mode}:{count}")?;
        }
        write!(f, "⟩")
    }
}

/// Accumulates amplitudes, merging repeated kets.
#[derive(Debug, Default, Clone)]
pub(crate) struct Accumulator {
    terms: HashMap<BasisKet, Complex64>,
}

impl Accumulator {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add(&mut self, ket: BasisKet, amplitude: Complex64) {
        *self.terms.entry(ket).or_insert(Complex64::new(0.0, 0.0)) += amplitude;
    }

    /// Prunes numerically zero terms and renormalises. Returns the state and
    /// the squared norm it had before renormalisation.
    pub(crate) fn finish(self) -> Result<(PureState, f64)> {
        let mut terms: BTreeMap<BasisKet, Complex64> = self
            .terms
            .into_iter()
            .filter(|(_, a)| a.norm() >= PRUNE_TOLERANCE)
            .collect();
        let norm_sqr: f64 = terms.values().map(|a| a.norm_sqr()).sum();
        if norm_sqr <= PRUNE_TOLERANCE * PRUNE_TOLERANCE {
            return Err(FockError::ZeroNorm);
        }
        let scale = 1.0 / norm_sqr.sqrt();
        for a in terms.values_mut() {
            *a *= scale;
        }
        Ok((PureState { terms }, norm_sqr))
    }
}

/// A normalised sparse superposition of basis kets.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    terms: BTreeMap<BasisKet, Complex64>,
}

impl PureState {
    pub fn basis(ket: BasisKet) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(ket, Complex64::new(1.0, 0.0));
        PureState { terms }
    }

    /// Builds a normalised state from (possibly repeated, unnormalised) terms.
    pub fn from_terms<I>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (BasisKet, Complex64)>,
    {
        let mut acc = Accumulator::new();
        for (ket, amp) in terms {
            acc.add(ket, amp);
        }
        acc.finish().map(|(s, _)| s)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BasisKet, Complex64)> {
        self.terms.iter().map(|(k, a)| (k, *a))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn amplitude(&self, ket: &BasisKet) -> Complex64 {
        self.terms.get(ket).copied().unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    /// Maps every term to a set of new terms. Used for every linear
    /// operation; the result is renormalised to absorb rounding drift.
    pub fn try_flat_map<F, I, E>(&self, mut f: F) -> std::result::Result<PureState, E>
    where
        F: FnMut(&BasisKet, Complex64) -> std::result::Result<I, E>,
        I: IntoIterator<Item = (BasisKet, Complex64)>,
        E: From<FockError>,
    {
        let mut acc = Accumulator::new();
        for (ket, amp) in &self.terms {
            for (k, a) in f(ket, *amp)? {
                acc.add(k, a);
            }
        }
        acc.finish().map(|(s, _)| s).map_err(E::from)
    }

    /// Projects onto the kets accepted by `keep`. Returns the outcome
    /// probability and the renormalised post-projection state, or `None` when
    /// the outcome has zero probability.
    pub fn project<F: Fn(&BasisKet) -> bool>(&self, keep: F) -> Option<(f64, PureState)> {
        let mut acc = Accumulator::new();
        for (ket, amp) in self.terms.iter().filter(|(k, _)| keep(k)) {
            acc.add(ket.clone(), *amp);
        }
        acc.finish().ok().map(|(s, p)| (p, s))
    }

    /// `⟨self|other⟩`.
    pub fn inner_product(&self, other: &PureState) -> Complex64 {
        let (small, large, conj_small) = if self.terms.len() <= other.terms.len() {
            (&self.terms, &other.terms, true)
        } else {
            (&other.terms, &self.terms, false)
        };
        let mut sum = Complex64::new(0.0, 0.0);
        for (ket, a) in small {
            if let Some(b) = large.get(ket) {
                sum += if conj_small {
                    a.conj() * b
                } else {
                    b.conj() * a
                };
            }
        }
        sum
    }

    pub fn has_loss(&self) -> bool {
        self.terms.keys().any(BasisKet::has_loss)
    }

    /// Rewrites every mode through `f`.
    pub fn remap_modes<F: Fn(&Mode) -> Mode>(&self, f: F) -> Result<PureState> {
        self.try_flat_map(|ket, amp| Ok(std::iter::once((ket.remapped(&f)?, amp))))
    }

    /// Replaces the spin of every term, e.g. after the spin has been measured.
    pub fn with_spin(&self, spin: Spin) -> Result<PureState> {
        self.try_flat_map(|ket, amp| Ok(std::iter::once((ket.with_spin(spin), amp))))
    }

    /// Tensor product with a spin-free (all spin-down) photonic state whose
    /// modes are disjoint from ours. The spin is taken from `self`.
    pub fn product_with_photonic(&self, other: &PureState) -> Result<PureState> {
        if other.terms.keys().any(|k| k.spin != Spin::Down) {
            return Err(FockError::SpinPresent);
        }
        let mut acc = Accumulator::new();
        for (ka, a) in &self.terms {
            for (kb, b) in &other.terms {
                let mut ket = ka.clone();
                for (mode, n) in &kb.occupations {
                    if ket.occupation(mode) != 0 {
                        return Err(FockError::OverlappingModes);
                    }
                    ket = ket.with_occupation(*mode, *n)?;
                }
                acc.add(ket, a * b);
            }
        }
        acc.finish().map(|(s, _)| s)
    }

    /// Stable text form: one line per term in canonical order.
    pub fn to_debug_string(&self) -> String {
        let mut out = String::new();
        for (ket, amp) in &self.terms {
            let _ = writeln!(out, "{} {}", format_complex(amp), ket);
        }
        out
    }

    /// Purity of the reduced state on the subsystem made of the modes
    /// accepted by `side_a` (plus the spin when `spin_on_a`). A value of one
    /// means the state is a product across the cut.
    pub fn bipartite_purity<F: Fn(&Mode) -> bool>(&self, side_a: F, spin_on_a: bool) -> f64 {
        let split = |ket: &BasisKet| {
            let a: Vec<(Mode, u8)> = ket
                .occupations
                .iter()
                .filter(|(m, _)| side_a(m))
                .cloned()
                .collect();
            let b: Vec<(Mode, u8)> = ket
                .occupations
                .iter()
                .filter(|(m, _)| !side_a(m))
                .cloned()
                .collect();
            if spin_on_a {
                ((Some(ket.spin), a), (None, b))
            } else {
                ((None, a), (Some(ket.spin), b))
            }
        };
        // rho_A[a, a'] = sum_b c[a,b] conj(c[a',b])
        let mut by_b: BTreeMap<_, Vec<(_, Complex64)>> = BTreeMap::new();
        for (ket, amp) in &self.terms {
            let (a, b) = split(ket);
            by_b.entry(b).or_default().push((a, *amp));
        }
        let mut rho: BTreeMap<(_, _), Complex64> = BTreeMap::new();
        for column in by_b.values() {
            for (a1, c1) in column {
                for (a2, c2) in column {
                    *rho.entry((a1.clone(), a2.clone())).or_default() += c1 * c2.conj();
                }
            }
        }
        rho.values().map(|v| v.norm_sqr()).sum()
    }
}

impl fmt::Display for PureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_debug_string())
    }
}

/// Formats a real number like C's `%.12g`.
pub fn format_g12(x: f64) -> String {
    format_significant(x, 12)
}

pub(crate) fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn format_complex(z: &Complex64) -> String {
    let re = if z.re == 0.0 { 0.0 } else { z.re };
    let im = if z.im == 0.0 { 0.0 } else { z.im };
    let im_str = format_g12(im);
    let sign = if im_str.starts_with('-') { "" } else { "+" };
    format!("{}{}{}i", format_g12(re), sign, im_str)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub probability: f64,
    pub state: PureState,
}

/// A probability-weighted list of normalised pure states.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    components: Vec<MixtureComponent>,
}

impl Mixture {
    pub fn pure(state: PureState) -> Self {
        Mixture {
            components: vec![MixtureComponent {
                probability: 1.0,
                state,
            }],
        }
    }

    /// Zero-probability components are dropped; probabilities must sum to one.
    pub fn new(components: Vec<(f64, PureState)>) -> Result<Self> {
        let components: Vec<_> = components
            .into_iter()
            .filter(|(p, _)| *p > 0.0)
            .map(|(probability, state)| MixtureComponent { probability, state })
            .collect();
        let total: f64 = components.iter().map(|c| c.probability).sum();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(FockError::BadMixture(total));
        }
        Ok(Mixture { components })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.components.iter().map(|c| c.probability).sum()
    }

    /// The single pure component, if the mixture has exactly one.
    pub fn as_pure(&self) -> Option<&PureState> {
        match self.components.as_slice() {
            [only] => Some(&only.state),
            _ => None,
        }
    }

    pub fn try_map<F: FnMut(&PureState) -> Result<PureState>>(&self, mut f: F) -> Result<Mixture> {
        let components = self
            .components
            .iter()
            .map(|c| {
                Ok(MixtureComponent {
                    probability: c.probability,
                    state: f(&c.state)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mixture { components })
    }

    pub fn trace_loss_modes(&self) -> Mixture {
        let mut components = Vec::new();
        for c in &self.components {
            for inner in trace_loss_modes(&c.state).components {
                components.push(MixtureComponent {
                    probability: c.probability * inner.probability,
                    state: inner.state,
                });
            }
        }
        Mixture { components }
    }
}

/// Groups terms by their loss-channel occupation pattern. Each group becomes
/// one component with the loss modes removed.
pub fn trace_loss_modes(state: &PureState) -> Mixture {
    let mut groups: BTreeMap<Vec<(Mode, u8)>, Accumulator> = BTreeMap::new();
    for (ket, amp) in &state.terms {
        let pattern: Vec<(Mode, u8)> = ket
            .occupations
            .iter()
            .filter(|(m, _)| m.is_loss())
            .cloned()
            .collect();
        groups
            .entry(pattern)
            .or_default()
            .add(ket.filtered(|m| !m.is_loss()), *amp);
    }
    let total = state.norm_sqr();
    let components = groups
        .into_values()
        .filter_map(|acc| acc.finish().ok())
        .map(|(state, p)| MixtureComponent {
            probability: p / total,
            state,
        })
        .collect();
    Mixture { components }
}

pub fn inner_product(a: &PureState, b: &PureState) -> Complex64 {
    a.inner_product(b)
}

/// Either kind of state accepted by [`fidelity`].
#[derive(Debug, Clone, Copy)]
pub enum StateRef<'a> {
    Pure(&'a PureState),
    Mixed(&'a Mixture),
}

impl<'a> From<&'a PureState> for StateRef<'a> {
    fn from(s: &'a PureState) -> Self {
        StateRef::Pure(s)
    }
}

impl<'a> From<&'a Mixture> for StateRef<'a> {
    fn from(m: &'a Mixture) -> Self {
        StateRef::Mixed(m)
    }
}

/// `⟨target|σ|target⟩`.
pub fn fidelity<'a, S: Into<StateRef<'a>>>(state: S, target: &PureState) -> Result<f64> {
    if target.has_loss() {
        return Err(FockError::InvalidTarget);
    }
    let value = match state.into() {
        StateRef::Pure(s) => target.inner_product(s).norm_sqr(),
        StateRef::Mixed(m) => m
            .components
            .iter()
            .map(|c| c.probability * target.inner_product(&c.state).norm_sqr())
            .sum(),
    };
    Ok(value.clamp(0.0, 1.0))
}
