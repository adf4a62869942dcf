//! Ideal reference states built directly from their closed forms.
//!
//! A vertex is a GHZ state over its photons in the time-bin basis; adjacent
//! vertices and the spin/final-vertex pair are joined by CZ phase masks.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::fock::{BasisKet, Channel, FockError, Mode, ModeAddress, PureState, Spin, TimeBin};
use crate::protocol::{InitialSign, ProtocolConfig, Step5bMode};

/// Shape of a target state: vertex sizes, closing mode and initial sign.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSpec {
    pub qubits: Vec<usize>,
    pub step5b_mode: Step5bMode,
    pub initial_sign: InitialSign,
}

impl TargetSpec {
    pub fn new(qubits: Vec<usize>, step5b_mode: Step5bMode, initial_sign: InitialSign) -> Self {
        assert!(
            !qubits.is_empty() && !qubits.contains(&0),
            "every vertex needs at least one qubit"
        );
        TargetSpec {
            qubits,
            step5b_mode,
            initial_sign,
        }
    }

    pub fn vertices(&self) -> usize {
        self.qubits.len()
    }

    /// Amplitude sign carried by `|↑⟩` in the spin factor.
    pub fn spin_up_sign(&self) -> f64 {
        let s = self.initial_sign.value();
        match self.step5b_mode {
            Step5bMode::Alternating if self.vertices() % 2 == 1 => -s,
            _ => s,
        }
    }

    /// Amplitude sign of the all-late component of each vertex factor.
    pub fn late_sign(&self) -> f64 {
        match self.step5b_mode {
            Step5bMode::Alternating => 1.0,
            Step5bMode::Consistent => -1.0,
        }
    }

    /// Qubit labels in the order used by [`QubitState`]: spin first, then
    /// `(n, m)` in generation order.
    pub fn labels(&self) -> Vec<QubitLabel> {
        let mut out = vec![QubitLabel::Spin];
        for (n, &m_n) in self.qubits.iter().enumerate() {
            out.extend((1..=m_n).map(|m| QubitLabel::Photon(n + 1, m)));
        }
        out
    }
}

impl From<&ProtocolConfig> for TargetSpec {
    fn from(config: &ProtocolConfig) -> Self {
        TargetSpec::new(
            config.qubits_per_vertex(),
            config.step5b_mode,
            config.initial_sign,
        )
    }
}

/// Amplitudes over (spin bit, vertex bits), before normalisation; the same
/// coefficient shape underlies every builder in this module.
fn coefficient(
    spec: &TargetSpec,
    spin_up: bool,
    late: &[bool],
    spin_sign: f64,
    late_sign: f64,
) -> f64 {
    let mut c = if spin_up { spin_sign } else { 1.0 };
    for &l in late {
        if l {
            c *= late_sign;
        }
    }
    for pair in late.windows(2) {
        if pair[0] && pair[1] {
            c = -c;
        }
    }
    if spin_up && late[spec.vertices() - 1] {
        c = -c;
    }
    c
}

fn branches(spec: &TargetSpec) -> impl Iterator<Item = (bool, Vec<bool>)> + '_ {
    let n = spec.vertices();
    (0u64..1 << (n + 1)).map(move |bits| {
        let spin_up = bits & 1 == 1;
        let late = (0..n).map(|i| (bits >> (i + 1)) & 1 == 1).collect();
        (spin_up, late)
    })
}

fn build(spec: &TargetSpec, spin_sign: f64, late_sign: f64) -> PureState {
    let norm = (0.5f64).powf((spec.vertices() + 1) as f64 / 2.0);
    let terms = branches(spec).map(|(spin_up, late)| {
        let mut occupations = Vec::new();
        for (n, &m_n) in spec.qubits.iter().enumerate() {
            let bin = if late[n] {
                TimeBin::Late
            } else {
                TimeBin::Early
            };
            for m in 1..=m_n {
                occupations.push((Mode::from(ModeAddress::resonant(n + 1, m, bin)), 1u8));
            }
        }
        let spin = if spin_up { Spin::Up } else { Spin::Down };
        let ket = BasisKet::from_occupations(spin, occupations).expect("one photon per mode");
        let c = coefficient(spec, spin_up, &late, spin_sign, late_sign);
        (ket, Complex64::new(c * norm, 0.0))
    });
    PureState::from_terms(terms).expect("nonzero target")
}

/// The state produced by closing every vertex with the same gate: spin
/// factor `|↓⟩ ± |↑⟩` and vertex factors `|early⟩ - |late⟩`.
pub fn build_eq1_state(spec: &TargetSpec) -> PureState {
    build(spec, spec.initial_sign.value(), -1.0)
}

/// The state produced by alternating the closing gates: spin factor
/// `|↓⟩ ± (-1)^N |↑⟩` and vertex factors `|early⟩ + |late⟩`.
pub fn build_eq2_state(spec: &TargetSpec) -> PureState {
    let s = spec.initial_sign.value();
    let spin_sign = if spec.vertices() % 2 == 1 { -s } else { s };
    build(spec, spin_sign, 1.0)
}

/// Target matching the spec's closing mode.
pub fn target_state(spec: &TargetSpec) -> PureState {
    match spec.step5b_mode {
        Step5bMode::Consistent => build_eq1_state(spec),
        Step5bMode::Alternating => build_eq2_state(spec),
    }
}

/// Multiplies every term whose final vertex is late by `e^{iφ}`.
pub fn remnant_phase_correction(state: &PureState, spec: &TargetSpec, phase: f64) -> PureState {
    let last = spec.vertices();
    let probe: Mode = ModeAddress::resonant(last, 1, TimeBin::Late).into();
    let rot = Complex64::from_polar(1.0, phase);
    state
        .try_flat_map(|ket, a| {
            let a = if ket.occupation(&probe) > 0 {
                a * rot
            } else {
                a
            };
            Ok::<_, FockError>(std::iter::once((ket.clone(), a)))
        })
        .expect("phase map preserves norm")
}

/// Measures the spin in its energy basis and resets it to `|↓⟩`, leaving a
/// purely photonic state. Returns the outcome probability and the state, or
/// `None` for a zero-probability outcome.
pub fn disconnect_spin(state: &PureState, outcome: Spin) -> Option<(f64, PureState)> {
    let (p, post) = state.project(|k| k.spin() == outcome)?;
    Some((p, post.with_spin(Spin::Down).expect("spin-definite state")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QubitLabel {
    Spin,
    Photon(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// A signed tensor product of Paulis over [`QubitState`] label positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    pub sign: f64,
    pub ops: BTreeMap<usize, Pauli>,
}

impl PauliString {
    pub fn new(sign: f64, ops: impl IntoIterator<Item = (usize, Pauli)>) -> Self {
        PauliString {
            sign,
            ops: ops.into_iter().filter(|(_, p)| *p != Pauli::I).collect(),
        }
    }
}

/// A state over abstract qubits, amplitudes keyed by bit strings in label
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitState {
    pub labels: Vec<QubitLabel>,
    pub amplitudes: BTreeMap<Vec<u8>, Complex64>,
}

impl QubitState {
    pub fn index_of(&self, label: QubitLabel) -> Option<usize> {
        self.labels.iter().position(|l| *l == label)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner_product(&self, other: &QubitState) -> Complex64 {
        assert_eq!(self.labels, other.labels, "label sets differ");
        self.amplitudes
            .iter()
            .filter_map(|(bits, a)| other.amplitudes.get(bits).map(|b| a.conj() * b))
            .sum()
    }

    /// `⟨ψ|P|ψ⟩`, real for Hermitian `P`.
    pub fn pauli_expectation(&self, pauli: &PauliString) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (bits, a) in &self.amplitudes {
            let mut out = bits.clone();
            let mut phase = Complex64::new(pauli.sign, 0.0);
            for (&q, &p) in &pauli.ops {
                let b = bits[q];
                match p {
                    Pauli::I => {}
                    Pauli::X => out[q] ^= 1,
                    Pauli::Y => {
                        out[q] ^= 1;
                        phase *= if b == 0 {
                            Complex64::i()
                        } else {
                            -Complex64::i()
                        };
                    }
                    Pauli::Z => {
                        if b == 1 {
                            phase = -phase;
                        }
                    }
                }
            }
            if let Some(c) = self.amplitudes.get(&out) {
                acc += c.conj() * phase * a;
            }
        }
        acc.re
    }

    /// Hadamard on the qubit at position `q`.
    pub fn apply_hadamard(&self, q: usize) -> QubitState {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut out: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
        for (bits, a) in &self.amplitudes {
            let mut zero = bits.clone();
            zero[q] = 0;
            let mut one = bits.clone();
            one[q] = 1;
            let sign = if bits[q] == 1 { -1.0 } else { 1.0 };
            *out.entry(zero).or_default() += a * r;
            *out.entry(one).or_default() += a * r * sign;
        }
        out.retain(|_, a| a.norm() > crate::fock::PRUNE_TOLERANCE);
        QubitState {
            labels: self.labels.clone(),
            amplitudes: out,
        }
    }
}

/// The target rewritten over abstract qubits: spin in `(|0⟩ ± |1⟩)/√2`,
/// each vertex a GHZ state, with CZ between neighbours and between the spin
/// and the final vertex. Signs follow the spec's closing mode.
pub fn build_computational_state(spec: &TargetSpec) -> QubitState {
    let labels = spec.labels();
    let norm = (0.5f64).powf((spec.vertices() + 1) as f64 / 2.0);
    let mut amplitudes = BTreeMap::new();
    for (spin_up, late) in branches(spec) {
        let mut bits = vec![u8::from(spin_up)];
        for (n, &m_n) in spec.qubits.iter().enumerate() {
            bits.extend(std::iter::repeat_n(u8::from(late[n]), m_n));
        }
        let c = coefficient(spec, spin_up, &late, spec.spin_up_sign(), spec.late_sign());
        amplitudes.insert(bits, Complex64::new(c * norm, 0.0));
    }
    QubitState { labels, amplitudes }
}

/// Reads a photonic state as abstract qubits (early → 0, late → 1,
/// `|↓⟩` → 0, `|↑⟩` → 1). Fails if any term is outside the code space: a
/// qubit without exactly one resonant photon, or any other channel.
pub fn encode(state: &PureState, spec: &TargetSpec) -> Option<QubitState> {
    let labels = spec.labels();
    let mut amplitudes = BTreeMap::new();
    for (ket, a) in state.terms() {
        if ket
            .occupations()
            .any(|(m, _)| m.channel() != Channel::ResonantH)
        {
            return None;
        }
        let mut bits = vec![u8::from(ket.spin() == Spin::Up)];
        for label in &labels[1..] {
            let QubitLabel::Photon(n, m) = *label else {
                unreachable!()
            };
            let e = ket.occupation(&ModeAddress::resonant(n, m, TimeBin::Early).into());
            let l = ket.occupation(&ModeAddress::resonant(n, m, TimeBin::Late).into());
            match (e, l) {
                (1, 0) => bits.push(0),
                (0, 1) => bits.push(1),
                _ => return None,
            }
        }
        if ket.total_photons() as usize != labels.len() - 1 {
            return None;
        }
        amplitudes.insert(bits, a);
    }
    Some(QubitState { labels, amplitudes })
}

/// Inverse of [`encode`].
pub fn decode(qubits: &QubitState) -> PureState {
    let terms = qubits.amplitudes.iter().map(|(bits, a)| {
        let spin = if bits[0] == 1 { Spin::Up } else { Spin::Down };
        let occupations = qubits.labels[1..]
            .iter()
            .zip(&bits[1..])
            .map(|(label, &b)| {
                let QubitLabel::Photon(n, m) = *label else {
                    unreachable!()
                };
                let bin = if b == 1 {
                    TimeBin::Late
                } else {
                    TimeBin::Early
                };
                (Mode::from(ModeAddress::resonant(n, m, bin)), 1u8)
            });
        (
            BasisKet::from_occupations(spin, occupations).expect("single photons"),
            *a,
        )
    });
    PureState::from_terms(terms).expect("nonzero state")
}

/// Stabiliser generators of [`build_computational_state`]: one X-type
/// generator per vertex and for the spin, plus `Z Z` pairs inside each
/// vertex.
pub fn stabilizer_generators(spec: &TargetSpec) -> Vec<PauliString> {
    let labels = spec.labels();
    let pos = |l: QubitLabel| labels.iter().position(|x| *x == l).expect("label exists");
    let n_vertices = spec.vertices();
    let mut out = Vec::new();

    for n in 1..=n_vertices {
        let mut ops: Vec<(usize, Pauli)> = (1..=spec.qubits[n - 1])
            .map(|m| (pos(QubitLabel::Photon(n, m)), Pauli::X))
            .collect();
        if n > 1 {
            ops.push((pos(QubitLabel::Photon(n - 1, 1)), Pauli::Z));
        }
        if n < n_vertices {
            ops.push((pos(QubitLabel::Photon(n + 1, 1)), Pauli::Z));
        } else {
            ops.push((pos(QubitLabel::Spin), Pauli::Z));
        }
        out.push(PauliString::new(spec.late_sign(), ops));
    }
    out.push(PauliString::new(
        spec.spin_up_sign(),
        [
            (pos(QubitLabel::Spin), Pauli::X),
            (pos(QubitLabel::Photon(n_vertices, 1)), Pauli::Z),
        ],
    ));
    for n in 1..=n_vertices {
        for m in 2..=spec.qubits[n - 1] {
            out.push(PauliString::new(
                1.0,
                [
                    (pos(QubitLabel::Photon(n, 1)), Pauli::Z),
                    (pos(QubitLabel::Photon(n, m)), Pauli::Z),
                ],
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::inner_product;

    fn spec(qubits: Vec<usize>, mode: Step5bMode, sign: InitialSign) -> TargetSpec {
        TargetSpec::new(qubits, mode, sign)
    }

    fn ket(spin: Spin, bins: &[(usize, usize, TimeBin)]) -> BasisKet {
        BasisKet::from_occupations(
            spin,
            bins.iter()
                .map(|&(n, m, b)| (ModeAddress::resonant(n, m, b).into(), 1u8)),
        )
        .unwrap()
    }

    #[test]
    fn smallest_eq1_minus_by_hand() {
        use TimeBin::*;
        let s = build_eq1_state(&spec(vec![1], Step5bMode::Consistent, InitialSign::Minus));
        let h = 0.5;
        assert!((s.amplitude(&ket(Spin::Down, &[(1, 1, Early)])).re - h).abs() < 1e-12);
        assert!((s.amplitude(&ket(Spin::Down, &[(1, 1, Late)])).re + h).abs() < 1e-12);
        assert!((s.amplitude(&ket(Spin::Up, &[(1, 1, Early)])).re + h).abs() < 1e-12);
        assert!((s.amplitude(&ket(Spin::Up, &[(1, 1, Late)])).re + h).abs() < 1e-12);
    }

    #[test]
    fn term_counts_and_norm() {
        for n in 1..=4 {
            for m in 1..=3 {
                let t = build_eq2_state(&spec(
                    vec![m; n],
                    Step5bMode::Alternating,
                    InitialSign::Plus,
                ));
                assert_eq!(t.len(), 1 << (n + 1));
                assert!((t.norm_sqr() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eq2_spin_sign_alternates_with_n() {
        for n in 1..=4 {
            let t = build_eq2_state(&spec(
                vec![1; n],
                Step5bMode::Alternating,
                InitialSign::Plus,
            ));
            let early: Vec<_> = (1..=n).map(|v| (v, 1, TimeBin::Early)).collect();
            let up = t.amplitude(&ket(Spin::Up, &early));
            let down = t.amplitude(&ket(Spin::Down, &early));
            let expected = if n % 2 == 1 { -1.0 } else { 1.0 };
            assert!((up / down - expected).norm() < 1e-12, "N={n}");
        }
    }

    #[test]
    fn eq1_and_eq2_agree_at_n1_up_to_local_phases() {
        let a = build_eq1_state(&spec(vec![2], Step5bMode::Consistent, InitialSign::Minus));
        let b = build_eq2_state(&spec(vec![2], Step5bMode::Alternating, InitialSign::Plus));
        // Same magnitudes per term, so a diagonal local phase relates them.
        for (k, x) in a.terms() {
            assert!((x.norm() - b.amplitude(k).norm()).abs() < 1e-12);
        }
        assert_eq!(a.len(), b.len());
    }

    #[test]
    fn computational_state_round_trips() {
        for mode in [Step5bMode::Consistent, Step5bMode::Alternating] {
            for sign in [InitialSign::Plus, InitialSign::Minus] {
                let sp = spec(vec![2, 1, 3], mode, sign);
                let q = build_computational_state(&sp);
                let photonic = target_state(&sp);
                assert!((inner_product(&decode(&q), &photonic).norm() - 1.0).abs() < 1e-12);
                let back = encode(&photonic, &sp).unwrap();
                assert!((back.inner_product(&q).norm() - 1.0).abs() < 1e-12);
                assert!((q.inner_product(&q).re - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ghz_limit_has_two_components_after_spin_hadamard() {
        // With the minus sign and one vertex the spin factor is |0⟩ + |1⟩, so
        // the Hadamard yields |0000⟩ + |1111⟩.
        let sp = spec(vec![3], Step5bMode::Alternating, InitialSign::Minus);
        let q = build_computational_state(&sp).apply_hadamard(0);
        assert_eq!(q.amplitudes.len(), 2);
        let weights: Vec<f64> = q.amplitudes.values().map(|a| a.norm_sqr()).collect();
        assert!((weights[0] - 0.5).abs() < 1e-12 && (weights[1] - 0.5).abs() < 1e-12);
        let xxxx = PauliString::new(1.0, (0..4).map(|i| (i, Pauli::X)));
        assert!((q.pauli_expectation(&xxxx) - 1.0).abs() < 1e-12);
        for i in 1..4 {
            let zz = PauliString::new(1.0, [(0, Pauli::Z), (i, Pauli::Z)]);
            assert!((q.pauli_expectation(&zz) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_cluster_stabilisers() {
        // For single-photon vertices the chain V1 - V2 - V3 - S is a linear
        // cluster: K_i = X_i Z_{i-1} Z_{i+1}, up to the sign of each X.
        let sp = spec(vec![1, 1, 1], Step5bMode::Alternating, InitialSign::Plus);
        let q = build_computational_state(&sp);
        let chain = [1usize, 2, 3, 0];
        for (i, &site) in chain.iter().enumerate() {
            let mut ops = vec![(site, Pauli::X)];
            if i > 0 {
                ops.push((chain[i - 1], Pauli::Z));
            }
            if i + 1 < chain.len() {
                ops.push((chain[i + 1], Pauli::Z));
            }
            let e = q.pauli_expectation(&PauliString::new(1.0, ops));
            assert!((e.abs() - 1.0).abs() < 1e-12, "site {site}: {e}");
        }
    }

    #[test]
    fn stabiliser_generators_hold() {
        for mode in [Step5bMode::Consistent, Step5bMode::Alternating] {
            for sign in [InitialSign::Plus, InitialSign::Minus] {
                let sp = spec(vec![2, 3, 1], mode, sign);
                let q = build_computational_state(&sp);
                for g in stabilizer_generators(&sp) {
                    assert!((q.pauli_expectation(&g) - 1.0).abs() < 1e-12, "{g:?}");
                }
            }
        }
    }

    #[test]
    fn remnant_phase_twice_and_zero() {
        let sp = spec(vec![2, 2], Step5bMode::Alternating, InitialSign::Plus);
        let t = target_state(&sp);
        assert_eq!(remnant_phase_correction(&t, &sp, 0.0), t);
        let once = remnant_phase_correction(&t, &sp, std::f64::consts::PI);
        let twice = remnant_phase_correction(&once, &sp, std::f64::consts::PI);
        assert!((inner_product(&twice, &t).re - 1.0).abs() < 1e-12);
        assert!(inner_product(&once, &t).norm() < 1.0 - 1e-6);
    }

    #[test]
    fn remnant_phase_restores_stabilisers() {
        let sp = spec(vec![1, 2], Step5bMode::Alternating, InitialSign::Plus);
        let t = target_state(&sp);
        let skewed = remnant_phase_correction(&t, &sp, 0.7);
        let fixed = remnant_phase_correction(&skewed, &sp, -0.7);
        let q = encode(&fixed, &sp).unwrap();
        for g in stabilizer_generators(&sp) {
            assert!((q.pauli_expectation(&g) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disconnecting_the_spin() {
        let sp = spec(vec![2], Step5bMode::Alternating, InitialSign::Plus);
        let (p, s) = disconnect_spin(&target_state(&sp), Spin::Down).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!(s.terms().all(|(k, _)| k.spin() == Spin::Down));
        assert_eq!(s.len(), 2);
    }
}
