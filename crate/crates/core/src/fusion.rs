//! Type-II fusion of dual-rail photonic qubits.
//!
//! Time-bin qubits are relabelled onto detector ports, mixed by the fusion
//! transfer matrix, and measured with photon-number-resolving detectors.
//! Each photon channel passes through the linear optics independently.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fock::{
    BasisKet, Channel, DualRailMode, FockError, Mode, ModeAddress, Port, PureState, Spin, TimeBin,
};
use crate::protocol::{self, ErrorModel, ProtocolConfig, ProtocolError};
use crate::targets::disconnect_spin;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("ports {0:?} and {1:?} cannot both carry one qubit")]
    SameRails(Port, Port),
    #[error("port {0:?} is already occupied")]
    PortCollision(Port),
    #[error("boost level m must be at least 1")]
    BoostLevel,
    #[error("efficiency {0} is outside [0, 1]")]
    Efficiency(f64),
    #[error("at least one trial is required")]
    NoTrials,
    #[error("input state is not pure")]
    MixedInput,
    #[error("spin projection has zero probability")]
    ZeroProbability,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Fock(#[from] FockError),
}

pub type Result<T> = std::result::Result<T, FusionError>;

/// The two ports carrying one dual-rail qubit: early bin on `first`, late
/// bin on `second`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RailPair {
    pub first: Port,
    pub second: Port,
}

impl RailPair {
    pub const QUBIT_1: RailPair = RailPair {
        first: Port::A,
        second: Port::B,
    };
    pub const QUBIT_2: RailPair = RailPair {
        first: Port::C,
        second: Port::D,
    };
}

/// Moves the photons of time-bin qubit `(vertex, qubit)` onto `rails`,
/// keeping each photon's channel. Loss-channel photons stay where they are.
pub fn to_dual_rail(
    state: &PureState,
    qubit: (usize, usize),
    rails: RailPair,
) -> Result<PureState> {
    if rails.first == rails.second {
        return Err(FusionError::SameRails(rails.first, rails.second));
    }
    for (ket, _) in state.terms() {
        for (mode, _) in ket.occupations() {
            if let Mode::Rail(r) = mode {
                if r.port == rails.first || r.port == rails.second {
                    return Err(FusionError::PortCollision(r.port));
                }
            }
        }
    }
    let relabelled = state.remap_modes(|mode| match mode {
        Mode::Bin(a) if (a.vertex, a.qubit) == qubit && a.channel != Channel::Loss => {
            let port = match a.bin {
                TimeBin::Early => rails.first,
                TimeBin::Late => rails.second,
            };
            Mode::Rail(DualRailMode {
                port,
                channel: a.channel,
            })
        }
        other => *other,
    })?;
    Ok(relabelled)
}

/// Fusion transfer matrix between output and input creation operators,
/// `out† = T in†`, in port order A, B, C, D. It is real, symmetric and its
/// own inverse.
pub const FUSION_TRANSFER: [[f64; 4]; 4] = [
    [0.5, 0.5, 0.5, 0.5],
    [0.5, 0.5, -0.5, -0.5],
    [0.5, -0.5, 0.5, -0.5],
    [0.5, -0.5, -0.5, 0.5],
];

/// Applies a passive linear-optics transform to the modes returned by
/// `modes(channel)` for each optical channel. `substitution[i][j]` is the
/// coefficient of output mode `j` in input creation operator `i`, i.e. the
/// inverse transfer matrix.
fn linear_optics<F>(state: &PureState, modes: F, substitution: &[Vec<f64>]) -> Result<PureState>
where
    F: Fn(Channel) -> Vec<Mode>,
{
    let k = substitution.len();
    let per_channel: Vec<Vec<Mode>> = Channel::OPTICAL.iter().map(|&c| modes(c)).collect();
    let out = state.try_flat_map(|ket, a| {
        let mut branches = vec![(ket.clone(), a)];
        for group in &per_channel {
            debug_assert_eq!(group.len(), k);
            let mut next = Vec::new();
            for (base, amp) in branches {
                let counts: Vec<u8> = group.iter().map(|m| base.occupation(m)).collect();
                if counts.iter().all(|&c| c == 0) {
                    next.push((base, amp));
                    continue;
                }
                let mut stripped = base.clone();
                for m in group {
                    stripped = stripped.with_occupation(*m, 0)?;
                }
                for (exponents, c) in expand(&counts, substitution) {
                    let mut ket = stripped.clone();
                    for (m, &e) in group.iter().zip(&exponents) {
                        if e > 0 {
                            ket = ket.with_occupation(*m, e)?;
                        }
                    }
                    next.push((ket, amp * c));
                }
            }
            branches = next;
        }
        Ok::<_, FusionError>(branches)
    })?;
    Ok(out)
}

fn factorial(n: u8) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Expands `Π_i (Σ_j s[i][j] a_j†)^{n_i} / √(n_i!)` acting on vacuum into
/// normalised Fock amplitudes over output occupation vectors.
fn expand(counts: &[u8], substitution: &[Vec<f64>]) -> Vec<(Vec<u8>, f64)> {
    let k = counts.len();
    let mut poly: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
    let prefactor: f64 = counts.iter().map(|&n| factorial(n).sqrt()).product();
    poly.insert(vec![0; k], 1.0 / prefactor);
    for (i, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let mut next: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
            for (mono, c) in &poly {
                for j in 0..k {
                    let s = substitution[i][j];
                    if s == 0.0 {
                        continue;
                    }
                    let mut m = mono.clone();
                    m[j] += 1;
                    *next.entry(m).or_default() += c * s;
                }
            }
            poly = next;
        }
    }
    poly.into_iter()
        .map(|(mono, c)| {
            let norm: f64 = mono.iter().map(|&e| factorial(e).sqrt()).product();
            (mono, c * norm)
        })
        .filter(|(_, c)| c.abs() > crate::fock::PRUNE_TOLERANCE)
        .collect()
}

fn rail_modes(channel: Channel) -> Vec<Mode> {
    Port::ALL
        .iter()
        .map(|&port| Mode::Rail(DualRailMode { port, channel }))
        .collect()
}

/// Passes the photons on ports A to D through the fusion circuit.
pub fn apply_fusion_transfer(state: &PureState) -> Result<PureState> {
    // The matrix is its own inverse, so input operators expand with its rows.
    let sub: Vec<Vec<f64>> = FUSION_TRANSFER.iter().map(|r| r.to_vec()).collect();
    linear_optics(state, rail_modes, &sub)
}

/// 50:50 mixing of the two rails (early and late bins) of qubit
/// `(vertex, qubit)`: `(1/√2)[[1, 1], [1, -1]]` on creation operators.
pub fn apply_dual_rail_hadamard(state: &PureState, qubit: (usize, usize)) -> Result<PureState> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let sub = vec![vec![r, r], vec![r, -r]];
    let (n, m) = qubit;
    linear_optics(
        state,
        |channel| {
            vec![
                Mode::Bin(ModeAddress::new(n, m, TimeBin::Early, channel)),
                Mode::Bin(ModeAddress::new(n, m, TimeBin::Late, channel)),
            ]
        },
        &sub,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectorModel {
    /// Resolve photon number; otherwise report clicks only.
    pub number_resolving: bool,
    /// Tell resonant, detuned and orthogonally polarised photons apart.
    pub discriminate_channels: bool,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            number_resolving: true,
            discriminate_channels: true,
        }
    }
}

/// What the experimenter knows about the inputs when interpreting clicks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FusionContext {
    /// Both inputs may carry a step-3 vacuum/two-photon error component.
    pub step3_both_sides: bool,
    /// A single photon entering the circuit is expected (inefficient
    /// excitation on an unknown side).
    pub single_photon_input: bool,
    /// Spin flips with orthogonally polarised photons may have occurred.
    pub cyclicity_errors: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Projects onto `f_A f_C - f_B f_D`.
    SuccessAcBd,
    /// Projects onto `f_A f_D - f_B f_C`.
    SuccessAdBc,
    /// Entanglement between the two error components of a both-sided flip
    /// error.
    SuccessErrorStates,
    FailureSeparable,
    FailureErrorHeralded,
    Ambiguous,
    NoEntanglementAttempted,
}

impl Classification {
    pub fn is_success(self) -> bool {
        matches!(
            self,
            Classification::SuccessAcBd
                | Classification::SuccessAdBc
                | Classification::SuccessErrorStates
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            Classification::SuccessAcBd => "success_AC_BD",
            Classification::SuccessAdBc => "success_AD_BC",
            Classification::SuccessErrorStates => "success_error_states",
            Classification::FailureSeparable => "failure_separable",
            Classification::FailureErrorHeralded => "failure_error_heralded",
            Classification::Ambiguous => "ambiguous",
            Classification::NoEntanglementAttempted => "no_entanglement_attempted",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Detector readout: counts per port and channel. A `None` channel means the
/// detectors do not distinguish channels.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Counts(pub BTreeMap<(Port, Option<Channel>), u8>);

impl Counts {
    pub fn total(&self) -> u32 {
        self.0.values().map(|&c| u32::from(c)).sum()
    }

    fn per_port(&self, channel: Option<Channel>) -> [u8; 4] {
        let mut out = [0; 4];
        for (&(port, ch), &c) in &self.0 {
            if ch == channel {
                out[port.index()] += c;
            }
        }
        out
    }

    pub fn any_channel(&self, channel: Channel) -> bool {
        self.0
            .iter()
            .any(|(&(_, ch), &c)| ch == Some(channel) && c > 0)
    }
}

impl fmt::Display for Counts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("none");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(&(port, ch), &c)| match ch {
                Some(ch) => format!("{}[{}]:{}", port.label(), ch.label(), c),
                None => format!("{}:{}", port.label(), c),
            })
            .collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    /// Photon numbers actually present in each output mode.
    pub true_counts: Counts,
    /// What the detector model reports.
    pub observed: Counts,
    pub probability: f64,
    pub classification: Classification,
    /// Normalised state of everything not measured.
    pub post_state: PureState,
}

/// Interprets a detector readout. Two resonant photons split across the
/// qubits herald success and two at one detector herald failure. Odd photon
/// numbers, orthogonally polarised clicks, and two photons on one qubit's
/// rails herald an error unless `context` says otherwise.
pub fn classify_pattern(observed: &Counts, context: &FusionContext) -> Classification {
    if observed.total() == 0 {
        return Classification::NoEntanglementAttempted;
    }
    let discriminating = observed.0.keys().any(|(_, ch)| ch.is_some());
    if discriminating && observed.any_channel(Channel::OrthogonalV) {
        return Classification::FailureErrorHeralded;
    }
    let r = if discriminating {
        observed.per_port(Some(Channel::ResonantH))
    } else {
        observed.per_port(None)
    };
    let total: u8 = r.iter().sum();
    let [a, b, c, d] = r;
    let class = match total {
        0 => Classification::NoEntanglementAttempted,
        1 if context.single_photon_input => {
            // A click on A projects back onto the input; B never fires.
            if c == 1 {
                Classification::SuccessAcBd
            } else if d == 1 {
                Classification::SuccessAdBc
            } else {
                Classification::FailureSeparable
            }
        }
        2 => {
            if r.contains(&2) {
                if context.step3_both_sides {
                    Classification::Ambiguous
                } else {
                    Classification::FailureSeparable
                }
            } else if (a == 1 && c == 1) || (b == 1 && d == 1) {
                Classification::SuccessAcBd
            } else if (a == 1 && d == 1) || (b == 1 && c == 1) {
                Classification::SuccessAdBc
            } else if context.step3_both_sides {
                Classification::SuccessErrorStates
            } else {
                Classification::FailureErrorHeralded
            }
        }
        _ => Classification::FailureErrorHeralded,
    };
    if !discriminating && context.cyclicity_errors && class.is_success() {
        return Classification::Ambiguous;
    }
    class
}

/// Measures all four ports. Events are grouped by the true photon pattern,
/// so their probabilities sum to one.
pub fn measure_detectors(
    state: &PureState,
    detectors: DetectorModel,
    context: &FusionContext,
) -> Result<Vec<DetectionEvent>> {
    let mut groups: BTreeMap<Counts, Vec<(BasisKet, Complex64)>> = BTreeMap::new();
    for (ket, a) in state.terms() {
        let mut counts = Counts::default();
        for (mode, c) in ket.occupations() {
            if let Mode::Rail(r) = mode {
                counts.0.insert((r.port, Some(r.channel)), c);
            }
        }
        let rest = ket.filtered(|m| !matches!(m, Mode::Rail(_)));
        groups.entry(counts).or_default().push((rest, a));
    }
    let mut events = Vec::with_capacity(groups.len());
    for (true_counts, terms) in groups {
        let probability: f64 = terms.iter().map(|(_, a)| a.norm_sqr()).sum();
        let post_state = PureState::from_terms(terms)?;
        let observed = observe(&true_counts, detectors);
        let classification = classify_pattern(&observed, context);
        events.push(DetectionEvent {
            true_counts,
            observed,
            probability,
            classification,
            post_state,
        });
    }
    Ok(events)
}

fn observe(counts: &Counts, detectors: DetectorModel) -> Counts {
    let mut out = Counts::default();
    for (&(port, ch), &c) in &counts.0 {
        let key = if detectors.discriminate_channels {
            (port, ch)
        } else {
            (port, None)
        };
        *out.0.entry(key).or_default() += c;
    }
    if !detectors.number_resolving {
        for c in out.0.values_mut() {
            *c = (*c).min(1);
        }
    }
    out
}

pub fn success_probability(events: &[DetectionEvent]) -> f64 {
    events
        .iter()
        .filter(|e| e.classification.is_success())
        .map(|e| e.probability)
        .sum()
}

/// Builds a fusion input from two independently generated vertices. Each
/// side runs `config` with its own error model, its spin is measured in
/// `|↓⟩` to disconnect it, and side `b` is relabelled to vertex
/// `config.vertices() + v`. Qubit `(1, 1)` of each side is fused: side `a`
/// on ports A/B and side `b` on C/D.
pub fn two_vertex_fusion_input(
    config: &ProtocolConfig,
    errors_a: &ErrorModel,
    errors_b: &ErrorModel,
) -> Result<PureState> {
    let side = |errors: &ErrorModel| -> Result<PureState> {
        let mixture = protocol::run_protocol(config, errors)?;
        let state = mixture.as_pure().ok_or(FusionError::MixedInput)?;
        let (_, photonic) =
            disconnect_spin(state, Spin::Down).ok_or(FusionError::ZeroProbability)?;
        Ok(photonic)
    };
    let offset = config.vertices();
    let a = side(errors_a)?;
    let b = side(errors_b)?.remap_modes(|m| match m {
        Mode::Bin(addr) => Mode::Bin(ModeAddress {
            vertex: addr.vertex + offset,
            ..*addr
        }),
        other => *other,
    })?;
    let joint = a.product_with_photonic(&b)?;
    let joint = to_dual_rail(&joint, (1, 1), RailPair::QUBIT_1)?;
    to_dual_rail(&joint, (offset + 1, 1), RailPair::QUBIT_2)
}

/// One repeat-until-success boosted fusion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub attempts_used: u32,
    pub lost_photons: u32,
    pub pattern: String,
    pub classification: Classification,
}

const SUCCESS_PATTERNS: [&str; 4] = ["A+C", "B+D", "A+D", "B+C"];
const FAILURE_PATTERNS: [&str; 4] = ["A+A", "B+B", "C+C", "D+D"];

fn check_boost(m: u32, eta: f64) -> Result<()> {
    if m < 1 {
        return Err(FusionError::BoostLevel);
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(FusionError::Efficiency(eta));
    }
    Ok(())
}

/// Simulates boosted fusion between two vertices of `m` photons each. Every
/// photon is lost independently with probability `1 - η`; a single loss
/// destroys the vertex GHZ state and fails every attempt. Otherwise up to
/// `m` fusion attempts are made, each succeeding with probability 1/2.
/// Trial `trial` draws from stream `trial` of a generator seeded by `seed`.
pub fn boosted_fusion_trial(m: u32, eta: f64, seed: u64, trial: u64) -> Result<TrialRecord> {
    check_boost(m, eta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let lost_photons = (0..2 * m).filter(|_| !rng.random_bool(eta)).count() as u32;
    if lost_photons > 0 {
        return Ok(TrialRecord {
            trial,
            attempts_used: 0,
            lost_photons,
            pattern: "lost".into(),
            classification: Classification::FailureErrorHeralded,
        });
    }
    let mut pattern = String::new();
    for attempt in 1..=m {
        let k = rng.random_range(0..8usize);
        if k < 4 {
            let classification = if k < 2 {
                Classification::SuccessAcBd
            } else {
                Classification::SuccessAdBc
            };
            return Ok(TrialRecord {
                trial,
                attempts_used: attempt,
                lost_photons,
                pattern: SUCCESS_PATTERNS[k].into(),
                classification,
            });
        }
        pattern = FAILURE_PATTERNS[k - 4].into();
    }
    Ok(TrialRecord {
        trial,
        attempts_used: m,
        lost_photons,
        pattern,
        classification: Classification::FailureSeparable,
    })
}

/// Fraction of `trials` successful boosted fusions. Trials run in parallel;
/// the result does not depend on scheduling.
pub fn boosted_fusion_rate(m: u32, eta: f64, trials: u64, seed: u64) -> Result<f64> {
    check_boost(m, eta)?;
    if trials == 0 {
        return Err(FusionError::NoTrials);
    }
    let successes = (0..trials)
        .into_par_iter()
        .map(|t| {
            boosted_fusion_trial(m, eta, seed, t).map(|r| u64::from(r.classification.is_success()))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(successes as f64 / trials as f64)
}
