//! Amplitude-level execution of the emitter protocol.
//!
//! One round per vertex: for each sub-vertex block, emit the early photons
//! of every qubit in the block, flip the spin, emit the late photons, and
//! flip again before the next block. After the last block a Hadamard-type
//! gate prepares the spin for the next vertex. Every error mechanism is an
//! extra branch kept coherently in a distinguishable channel, so fidelities
//! fall out of overlaps without any special casing.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use thiserror::Error;

use crate::fock::{
    self, BasisKet, Channel, FockError, Mixture, Mode, ModeAddress, PureState, Spin, TimeBin,
};
use crate::gates::{apply_spin_gate, flip_gate, hadamard_gate, inverse_hadamard_gate, SpinGate};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("mode {0} already holds a resonant photon")]
    DoubleExcitation(Mode),
    #[error("measurement outcome has zero probability")]
    ZeroProbabilityOutcome,
    #[error(transparent)]
    Fock(#[from] FockError),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// How vertices are closed off after their last sub-vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step5bMode {
    /// The same Hadamard-type gate every round.
    Consistent,
    /// Alternate inverse Hadamard and Hadamard.
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitialSign {
    Plus,
    Minus,
}

impl InitialSign {
    pub fn value(self) -> f64 {
        match self {
            InitialSign::Plus => 1.0,
            InitialSign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolConfig {
    blocks: Vec<Vec<usize>>,
    pub step5b_mode: Step5bMode,
    pub initial_sign: InitialSign,
}

impl ProtocolConfig {
    /// `blocks[n-1]` lists the sub-vertex sizes of vertex `n`.
    pub fn new(
        blocks: Vec<Vec<usize>>,
        step5b_mode: Step5bMode,
        initial_sign: InitialSign,
    ) -> Result<Self> {
        if blocks.is_empty() {
            return Err(ProtocolError::Config(
                "at least one vertex is required".into(),
            ));
        }
        for (n, vertex) in blocks.iter().enumerate() {
            if vertex.is_empty() || vertex.contains(&0) {
                return Err(ProtocolError::Config(format!(
                    "vertex {} needs one or more sub-vertices of size >= 1",
                    n + 1
                )));
            }
        }
        Ok(ProtocolConfig {
            blocks,
            step5b_mode,
            initial_sign,
        })
    }

    /// `vertices` vertices, each a single block of `qubits` photons.
    pub fn uniform(
        vertices: usize,
        qubits: usize,
        step5b_mode: Step5bMode,
        initial_sign: InitialSign,
    ) -> Result<Self> {
        Self::new(vec![vec![qubits]; vertices], step5b_mode, initial_sign)
    }

    pub fn vertices(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self, vertex: usize) -> &[usize] {
        &self.blocks[vertex - 1]
    }

    pub fn all_blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn qubits(&self, vertex: usize) -> usize {
        self.blocks(vertex).iter().sum()
    }

    pub fn qubits_per_vertex(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.iter().sum()).collect()
    }

    pub fn total_photons(&self) -> usize {
        self.qubits_per_vertex().iter().sum()
    }

    /// Qubit indices (1-based) making up sub-vertex `sub` of `vertex`.
    pub fn sub_vertex_qubits(&self, vertex: usize, sub: usize) -> RangeInclusive<usize> {
        let blocks = self.blocks(vertex);
        let start: usize = blocks[..sub - 1].iter().sum::<usize>() + 1;
        start..=start + blocks[sub - 1] - 1
    }

    /// Every `(vertex, qubit)` pair in generation order.
    pub fn qubit_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=self.vertices()).flat_map(move |n| (1..=self.qubits(n)).map(move |m| (n, m)))
    }

    /// Whether vertex `vertex` (1-based) is closed by the inverse Hadamard.
    pub fn step5b_is_inverse(&self, vertex: usize) -> bool {
        let plus = self.initial_sign == InitialSign::Plus;
        match self.step5b_mode {
            Step5bMode::Consistent => !plus,
            Step5bMode::Alternating => (vertex % 2 == 1) == plus,
        }
    }
}

/// Rotation error on a spin control gate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotationError {
    pub dy: f64,
    pub dz: f64,
}

impl RotationError {
    pub fn new(dy: f64, dz: f64) -> Self {
        RotationError { dy, dz }
    }
}

/// A value applied everywhere unless overridden at a specific index.
#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast<K: Ord, V> {
    pub default: V,
    pub overrides: BTreeMap<K, V>,
}

impl<K: Ord + Copy, V: Copy> Broadcast<K, V> {
    pub fn new(default: V) -> Self {
        Broadcast {
            default,
            overrides: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: K) -> V {
        self.overrides.get(&key).copied().unwrap_or(self.default)
    }

    pub fn set(&mut self, key: K, value: V) -> &mut Self {
        self.overrides.insert(key, value);
        self
    }

    fn values(&self) -> impl Iterator<Item = V> + '_ {
        std::iter::once(self.default).chain(self.overrides.values().copied())
    }
}

pub type QubitKey = (usize, usize);
pub type BinKey = (usize, usize, TimeBin);

/// Per-step error parameters. The defaults are the ideal values.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    /// Weight of the intended initial spin state in the mixed preparation.
    pub spin_init_fidelity: f64,
    pub step1b: RotationError,
    /// Keyed by `(vertex, sub_vertex)`.
    pub step3: Broadcast<QubitKey, RotationError>,
    /// Keyed by `(vertex, j)`: the flip between sub-vertex `j` and `j + 1`.
    pub step5a: Broadcast<QubitKey, RotationError>,
    /// Keyed by vertex.
    pub step5b: Broadcast<usize, RotationError>,
    /// Probability that a pulse on the bright state yields a photon.
    pub excitation: Broadcast<BinKey, f64>,
    /// Probability that a pulse on the dark state emits a detuned photon.
    pub off_resonant: Broadcast<BinKey, f64>,
    /// Probability that the bright state decays back to itself.
    pub cyclicity: Broadcast<BinKey, f64>,
    pub loss_early: Broadcast<QubitKey, f64>,
    pub loss_late: Broadcast<QubitKey, f64>,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl ErrorModel {
    pub fn ideal() -> Self {
        ErrorModel {
            spin_init_fidelity: 1.0,
            step1b: RotationError::default(),
            step3: Broadcast::new(RotationError::default()),
            step5a: Broadcast::new(RotationError::default()),
            step5b: Broadcast::new(RotationError::default()),
            excitation: Broadcast::new(1.0),
            off_resonant: Broadcast::new(0.0),
            cyclicity: Broadcast::new(1.0),
            loss_early: Broadcast::new(0.0),
            loss_late: Broadcast::new(0.0),
        }
    }

    /// Sets `p_γ` on both time bins of one qubit.
    pub fn set_excitation(&mut self, vertex: usize, qubit: usize, p: f64) -> &mut Self {
        for bin in [TimeBin::Early, TimeBin::Late] {
            self.excitation.set((vertex, qubit, bin), p);
        }
        self
    }

    pub fn set_off_resonant(&mut self, vertex: usize, qubit: usize, p: f64) -> &mut Self {
        for bin in [TimeBin::Early, TimeBin::Late] {
            self.off_resonant.set((vertex, qubit, bin), p);
        }
        self
    }

    pub fn set_cyclicity(&mut self, vertex: usize, qubit: usize, p: f64) -> &mut Self {
        for bin in [TimeBin::Early, TimeBin::Late] {
            self.cyclicity.set((vertex, qubit, bin), p);
        }
        self
    }

    /// Sets the same loss probability on both bins of one qubit.
    pub fn set_loss(&mut self, vertex: usize, qubit: usize, p: f64) -> &mut Self {
        self.loss_early.set((vertex, qubit), p);
        self.loss_late.set((vertex, qubit), p);
        self
    }

    pub fn loss_probability(&self, address: &ModeAddress) -> f64 {
        let key = (address.vertex, address.qubit);
        match address.bin {
            TimeBin::Early => self.loss_early.get(key),
            TimeBin::Late => self.loss_late.get(key),
        }
    }

    fn has_loss(&self) -> bool {
        self.loss_early
            .values()
            .chain(self.loss_late.values())
            .any(|p| p > 0.0)
    }

    /// Checks probability domains and that every override addresses an index
    /// that exists in `config`.
    pub fn validate(&self, config: &ProtocolConfig) -> Result<()> {
        let in_unit = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(ProtocolError::Config(format!(
                    "{name} = {p} is outside [0, 1]"
                )))
            }
        };
        in_unit("spin_init_fidelity", self.spin_init_fidelity)?;
        for (name, map) in [
            ("excitation", &self.excitation),
            ("off_resonant", &self.off_resonant),
            ("cyclicity", &self.cyclicity),
        ] {
            for p in map.values() {
                in_unit(name, p)?;
            }
            for &(n, m, _) in map.overrides.keys() {
                check_qubit(config, name, n, m)?;
            }
        }
        for (name, map) in [
            ("loss_early", &self.loss_early),
            ("loss_late", &self.loss_late),
        ] {
            for p in map.values() {
                in_unit(name, p)?;
            }
            for &(n, m) in map.overrides.keys() {
                check_qubit(config, name, n, m)?;
            }
        }
        for &(n, j) in self.step3.overrides.keys() {
            check_vertex(config, "step3", n)?;
            if j == 0 || j > config.blocks(n).len() {
                return Err(ProtocolError::Config(format!(
                    "step3[{n},{j}] has no such sub-vertex"
                )));
            }
        }
        for &(n, j) in self.step5a.overrides.keys() {
            check_vertex(config, "step5a", n)?;
            if j == 0 || j >= config.blocks(n).len() {
                return Err(ProtocolError::Config(format!(
                    "step5a[{n},{j}] has no such inter-sub-vertex flip"
                )));
            }
        }
        for &n in self.step5b.overrides.keys() {
            check_vertex(config, "step5b", n)?;
        }
        Ok(())
    }
}

fn check_vertex(config: &ProtocolConfig, name: &str, n: usize) -> Result<()> {
    if n == 0 || n > config.vertices() {
        return Err(ProtocolError::Config(format!(
            "{name}: vertex {n} does not exist"
        )));
    }
    Ok(())
}

fn check_qubit(config: &ProtocolConfig, name: &str, n: usize, m: usize) -> Result<()> {
    check_vertex(config, name, n)?;
    if m == 0 || m > config.qubits(n) {
        return Err(ProtocolError::Config(format!(
            "{name}: qubit ({n},{m}) does not exist"
        )));
    }
    Ok(())
}

/// One excitation pulse targeting qubit `(vertex, qubit)` in `bin`.
///
/// A bright (spin-down) term branches into a resonant photon, no photon, or
/// a V photon with a spin flip. A dark (spin-up) term either stays put or
/// emits a detuned photon.
pub fn emit_photon(
    state: &PureState,
    vertex: usize,
    qubit: usize,
    bin: TimeBin,
    errors: &ErrorModel,
) -> Result<PureState> {
    let key = (vertex, qubit, bin);
    let p_gamma = errors.excitation.get(key);
    let p_up = errors.off_resonant.get(key);
    let p_cycle = errors.cyclicity.get(key);
    let mode = |channel| Mode::Bin(ModeAddress::new(vertex, qubit, bin, channel));
    let resonant = mode(Channel::ResonantH);

    state.try_flat_map(|ket, a| {
        let mut branches = Vec::with_capacity(3);
        match ket.spin() {
            Spin::Down => {
                if ket.occupation(&resonant) != 0 {
                    return Err(ProtocolError::DoubleExcitation(resonant));
                }
                let w = (p_cycle * p_gamma).sqrt();
                if w > 0.0 {
                    branches.push((ket.with_added(resonant, 1)?, a * w));
                }
                let w = (p_cycle * (1.0 - p_gamma)).sqrt();
                if w > 0.0 {
                    branches.push((ket.clone(), a * w));
                }
                let w = (1.0 - p_cycle).sqrt();
                if w > 0.0 {
                    let flipped = ket
                        .with_added(mode(Channel::OrthogonalV), 1)?
                        .with_spin(Spin::Up);
                    branches.push((flipped, -a * w));
                }
            }
            Spin::Up => {
                let w = (1.0 - p_up).sqrt();
                if w > 0.0 {
                    branches.push((ket.clone(), a * w));
                }
                let w = p_up.sqrt();
                if w > 0.0 {
                    branches.push((ket.with_added(mode(Channel::DetunedH), 1)?, a * w));
                }
            }
        }
        Ok::<_, ProtocolError>(branches)
    })
}

/// Moves each photon in a time-bin mode to the loss channel of the same
/// address with probability `loss(address)`, independently per photon.
pub fn apply_loss<F: Fn(&ModeAddress) -> f64>(state: &PureState, loss: F) -> Result<PureState> {
    let out = state.try_flat_map(|ket, a| {
        let mut branches = vec![(ket.clone(), a)];
        for (mode, count) in ket.occupations() {
            let Mode::Bin(address) = mode else { continue };
            if address.channel == Channel::Loss {
                continue;
            }
            let p = loss(address);
            if p <= 0.0 {
                continue;
            }
            let sink = Mode::Bin(ModeAddress {
                channel: Channel::Loss,
                ..*address
            });
            let mut next = Vec::with_capacity(branches.len() * (usize::from(count) + 1));
            for (k, amp_k) in &branches {
                for lost in 0..=count {
                    let weight = binomial(count, lost)
                        * p.powi(i32::from(lost))
                        * (1.0 - p).powi(i32::from(count - lost));
                    if weight <= 0.0 {
                        continue;
                    }
                    let moved = k
                        .with_occupation(*mode, count - lost)?
                        .with_added(sink, lost)?;
                    next.push((moved, amp_k * weight.sqrt()));
                }
            }
            branches = next;
        }
        Ok::<_, ProtocolError>(branches)
    });
    out
}

fn binomial(n: u8, k: u8) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

fn step5b_gate(config: &ProtocolConfig, vertex: usize, err: RotationError) -> SpinGate {
    if config.step5b_is_inverse(vertex) {
        inverse_hadamard_gate(err.dy, err.dz)
    } else {
        hadamard_gate(err.dy, err.dz)
    }
}

/// Step 1b gate: Hadamard for the `+` superposition, inverse Hadamard for `-`.
fn preparation_gate(config: &ProtocolConfig, err: RotationError) -> SpinGate {
    match config.initial_sign {
        InitialSign::Plus => hadamard_gate(err.dy, err.dz),
        InitialSign::Minus => inverse_hadamard_gate(err.dy, err.dz),
    }
}

/// Runs every round starting from the spin basis state `initial`, without
/// the loss channel.
pub fn generate_from(
    config: &ProtocolConfig,
    errors: &ErrorModel,
    initial: Spin,
) -> Result<PureState> {
    let mut state = PureState::basis(BasisKet::vacuum(initial));
    state = apply_spin_gate(&state, &preparation_gate(config, errors.step1b))?;
    for n in 1..=config.vertices() {
        let sub_vertices = config.blocks(n).len();
        for j in 1..=sub_vertices {
            let qubits = config.sub_vertex_qubits(n, j);
            for m in qubits.clone() {
                state = emit_photon(&state, n, m, TimeBin::Early, errors)?;
            }
            let e = errors.step3.get((n, j));
            state = apply_spin_gate(&state, &flip_gate(e.dy, e.dz))?;
            for m in qubits {
                state = emit_photon(&state, n, m, TimeBin::Late, errors)?;
            }
            if j < sub_vertices {
                let e = errors.step5a.get((n, j));
                state = apply_spin_gate(&state, &flip_gate(e.dy, e.dz))?;
            }
        }
        state = apply_spin_gate(&state, &step5b_gate(config, n, errors.step5b.get(n)))?;
    }
    Ok(state)
}

/// The joint spin-photon state after all rounds. The mixture has one
/// component per branch of the mixed spin preparation; loss photons are kept
/// in their loss channel until [`Mixture::trace_loss_modes`] is called.
pub fn run_protocol(config: &ProtocolConfig, errors: &ErrorModel) -> Result<Mixture> {
    errors.validate(config)?;
    let fs = errors.spin_init_fidelity;
    let mut components = Vec::with_capacity(2);
    // The + / - superpositions are prepared from |↑⟩.
    for (weight, spin) in [(fs, Spin::Up), (1.0 - fs, Spin::Down)] {
        if weight <= 0.0 {
            continue;
        }
        let mut state = generate_from(config, errors, spin)?;
        if errors.has_loss() {
            state = apply_loss(&state, |a| errors.loss_probability(a))?;
        }
        components.push((weight, state));
    }
    Ok(Mixture::new(components)?)
}

/// Fidelity of the generated state, traced over loss, against the ideal
/// target for `config`.
pub fn simulated_fidelity(config: &ProtocolConfig, errors: &ErrorModel) -> Result<f64> {
    let state = run_protocol(config, errors)?.trace_loss_modes();
    let target = crate::targets::target_state(&crate::targets::TargetSpec::from(config));
    Ok(fock::fidelity(&state, &target)?)
}

/// Result of heralding the spin through a measured photon.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinInitialization {
    pub probability: f64,
    pub state: Mixture,
}

/// Prepares a pure spin state from the mixed state
/// `F_s |↓⟩⟨↓| + (1 - F_s) |↑⟩⟨↑|` by generating one time-bin photon (early
/// pulse, flip, late pulse) and measuring its time bin. The returned spin is
/// expressed after undoing the intermediate flip, so an early click heralds
/// `|↓⟩` and a late click `|↑⟩`.
pub fn initialize_spin_by_measurement(
    errors: &ErrorModel,
    outcome: TimeBin,
) -> Result<SpinInitialization> {
    let fs = errors.spin_init_fidelity;
    if !(0.0..=1.0).contains(&fs) {
        return Err(ProtocolError::Config(format!(
            "spin_init_fidelity = {fs} is outside [0, 1]"
        )));
    }
    let other = match outcome {
        TimeBin::Early => TimeBin::Late,
        TimeBin::Late => TimeBin::Early,
    };
    let clicked: Mode = ModeAddress::resonant(1, 1, outcome).into();
    let unclicked: Mode = ModeAddress::resonant(1, 1, other).into();
    let undo_flip = flip_gate(0.0, 0.0).adjoint();

    let mut components = Vec::new();
    let mut total = 0.0;
    for (weight, spin) in [(fs, Spin::Down), (1.0 - fs, Spin::Up)] {
        if weight <= 0.0 {
            continue;
        }
        let mut state = PureState::basis(BasisKet::vacuum(spin));
        state = emit_photon(&state, 1, 1, TimeBin::Early, errors)?;
        let e = errors.step3.get((1, 1));
        state = apply_spin_gate(&state, &flip_gate(e.dy, e.dz))?;
        state = emit_photon(&state, 1, 1, TimeBin::Late, errors)?;
        let heralded = state.project(|k| {
            k.occupation(&clicked) == 1
                && k.occupation(&unclicked) == 0
                && k.occupations()
                    .all(|(m, _)| *m == clicked || m.channel() == Channel::ResonantH)
        });
        let Some((p, post)) = heralded else { continue };
        let spin_only = post.try_flat_map(|k, a| {
            Ok::<_, FockError>(std::iter::once((BasisKet::vacuum(k.spin()), a)))
        })?;
        let spin_only = apply_spin_gate(&spin_only, &undo_flip)?;
        total += weight * p;
        components.push((weight * p, spin_only));
    }
    if total <= fock::PRUNE_TOLERANCE {
        return Err(ProtocolError::ZeroProbabilityOutcome);
    }
    let components = components
        .into_iter()
        .map(|(w, s)| (w / total, s))
        .collect();
    Ok(SpinInitialization {
        probability: total,
        state: Mixture::new(components)?,
    })
}


#[cfg(test)]
mod target_agreement {
    use super::*;
    use crate::fock::inner_product;
    use crate::targets::{target_state, TargetSpec};

    #[test]
    fn ideal_runs_match_targets() {
        for mode in [Step5bMode::Consistent, Step5bMode::Alternating] {
            for sign in [InitialSign::Plus, InitialSign::Minus] {
                for n in 1..=4 {
                    for m in 1..=3 {
                        let config = ProtocolConfig::uniform(n, m, mode, sign).unwrap();
                        let sim = run_protocol(&config, &ErrorModel::ideal()).unwrap();
                        let sim = sim.as_pure().unwrap();
                        let t = target_state(&TargetSpec::from(&config));
                        let o = inner_product(&t, sim);
                        assert!(
                            (o.norm_sqr() - 1.0).abs() < 1e-10,
                            "{mode:?} {sign:?} N={n} M={m}: {o}"
                        );
                    }
                }
            }
        }
    }
}
