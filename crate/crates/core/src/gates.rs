//! Spin rotations with y/z rotation errors.
//!
//! Matrices are stored with rows and columns ordered `(|↑⟩, |↓⟩)`, i.e. the
//! computational order `(|0⟩, |1⟩)` in which `R_y(θ) = exp(-iYθ/2)` and
//! `R_z(θ) = exp(-iZθ/2)` take their textbook form. With this ordering the
//! closed-form matrices reproduce the stated actions, e.g.
//! `H_s|↑⟩ = (|↓⟩ + |↑⟩)/√2`.

use num_complex::Complex64;

use crate::fock::{self, PureState, Spin};

pub type Matrix2 = [[Complex64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateLabel {
    Hadamard,
    InverseHadamard,
    Flip,
    ZPhase,
    Custom,
}

/// A 2×2 unitary acting on the emitter spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinGate {
    /// Indexed `[row][column]` in the order `(|↑⟩, |↓⟩)`.
    pub matrix: Matrix2,
    pub label: GateLabel,
}

/// Row/column index of a spin state in [`SpinGate::matrix`].
pub fn spin_index(spin: Spin) -> usize {
    match spin {
        Spin::Up => 0,
        Spin::Down => 1,
    }
}

fn spin_at(index: usize) -> Spin {
    if index == 0 {
        Spin::Up
    } else {
        Spin::Down
    }
}

/// `cos Δ/2 + sin Δ/2`.
pub fn epsilon_plus(delta: f64) -> f64 {
    (delta / 2.0).cos() + (delta / 2.0).sin()
}

/// `cos Δ/2 - sin Δ/2`.
pub fn epsilon_minus(delta: f64) -> f64 {
    (delta / 2.0).cos() - (delta / 2.0).sin()
}

fn phase(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

/// `R_z(Δz) R_y(π/2 + Δy)`.
pub fn hadamard_gate(dy: f64, dz: f64) -> SpinGate {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (em, ep) = (epsilon_minus(dy), epsilon_plus(dy));
    let (lo, hi) = (phase(-dz / 2.0) * s, phase(dz / 2.0) * s);
    SpinGate {
        matrix: [[lo * em, -lo * ep], [hi * ep, hi * em]],
        label: GateLabel::Hadamard,
    }
}

/// `R_z(Δz) R_y(3π/2 + Δy)`.
pub fn inverse_hadamard_gate(dy: f64, dz: f64) -> SpinGate {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (em, ep) = (epsilon_minus(dy), epsilon_plus(dy));
    let (lo, hi) = (phase(-dz / 2.0) * s, phase(dz / 2.0) * s);
    SpinGate {
        matrix: [[-lo * ep, -lo * em], [hi * em, -hi * ep]],
        label: GateLabel::InverseHadamard,
    }
}

/// `R_z(Δz) R_y(π + Δy)`.
pub fn flip_gate(dy: f64, dz: f64) -> SpinGate {
    let (sn, cs) = ((dy / 2.0).sin(), (dy / 2.0).cos());
    let (lo, hi) = (phase(-dz / 2.0), phase(dz / 2.0));
    SpinGate {
        matrix: [[-lo * sn, -lo * cs], [hi * cs, -hi * sn]],
        label: GateLabel::Flip,
    }
}

/// Applies `e^{iφ}` to `|↑⟩`.
pub fn z_phase_gate(phi: f64) -> SpinGate {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    SpinGate {
        matrix: [[phase(phi), zero], [zero, one]],
        label: GateLabel::ZPhase,
    }
}

impl SpinGate {
    pub fn identity() -> SpinGate {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        SpinGate {
            matrix: [[one, zero], [zero, one]],
            label: GateLabel::Custom,
        }
    }

    /// `self · other` (other acts first).
    pub fn compose(&self, other: &SpinGate) -> SpinGate {
        SpinGate {
            matrix: matmul(&self.matrix, &other.matrix),
            label: GateLabel::Custom,
        }
    }

    pub fn adjoint(&self) -> SpinGate {
        let m = &self.matrix;
        SpinGate {
            matrix: [
                [m[0][0].conj(), m[1][0].conj()],
                [m[0][1].conj(), m[1][1].conj()],
            ],
            label: GateLabel::Custom,
        }
    }

    /// Largest entry of `|U†U - I|`.
    pub fn unitarity_defect(&self) -> f64 {
        let p = matmul(&self.adjoint().matrix, &self.matrix);
        let mut worst = 0.0_f64;
        for (i, row) in p.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

pub fn matmul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Applies `gate` to the spin factor of every term.
pub fn apply_spin_gate(state: &PureState, gate: &SpinGate) -> fock::Result<PureState> {
    state.try_flat_map(|ket, amp| {
        let col = spin_index(ket.spin());
        let terms: Vec<_> = (0..2)
            .map(|row| (ket.with_spin(spin_at(row)), gate.matrix[row][col] * amp))
            .collect();
        Ok(terms)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::BasisKet;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // exp(-iθσ/2) = cos(θ/2) I - i sin(θ/2) σ, built from the Pauli matrices.
    fn rotation(theta: f64, sigma: Matrix2) -> Matrix2 {
        let (cs, sn) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let mut out = [[c(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { cs } else { 0.0 };
                out[i][j] = c(id, 0.0) - c(0.0, sn) * sigma[i][j];
            }
        }
        out
    }

    fn ry(theta: f64) -> Matrix2 {
        rotation(
            theta,
            [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]],
        )
    }

    fn rz(theta: f64) -> Matrix2 {
        rotation(
            theta,
            [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]],
        )
    }

    fn max_diff(a: &Matrix2, b: &Matrix2) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((a[i][j] - b[i][j]).norm());
            }
        }
        worst
    }

    fn spin_state(down: Complex64, up: Complex64) -> PureState {
        PureState::from_terms([
            (BasisKet::vacuum(Spin::Down), down),
            (BasisKet::vacuum(Spin::Up), up),
        ])
        .unwrap()
    }

    fn assert_state_eq(a: &PureState, b: &PureState) {
        assert!(
            (a.inner_product(b) - c(1.0, 0.0)).norm() < 1e-12,
            "{a}\nvs\n{b}"
        );
    }

    fn grid() -> impl Iterator<Item = (f64, f64)> {
        (0..10).flat_map(|i| {
            (0..10).map(move |j| {
                (
                    -PI + 2.0 * PI * i as f64 / 9.0,
                    -PI + 2.0 * PI * j as f64 / 9.0,
                )
            })
        })
    }

    #[test]
    fn ideal_hadamard_actions() {
        let h = hadamard_gate(0.0, 0.0);
        let up = PureState::basis(BasisKet::vacuum(Spin::Up));
        let down = PureState::basis(BasisKet::vacuum(Spin::Down));
        let s = FRAC_1_SQRT_2;
        assert_state_eq(
            &apply_spin_gate(&up, &h).unwrap(),
            &spin_state(c(s, 0.0), c(s, 0.0)),
        );
        assert_state_eq(
            &apply_spin_gate(&down, &h).unwrap(),
            &spin_state(c(s, 0.0), c(-s, 0.0)),
        );
    }

    #[test]
    fn ideal_inverse_hadamard_actions() {
        let h = inverse_hadamard_gate(0.0, 0.0);
        let up = PureState::basis(BasisKet::vacuum(Spin::Up));
        let down = PureState::basis(BasisKet::vacuum(Spin::Down));
        let s = FRAC_1_SQRT_2;
        assert_state_eq(
            &apply_spin_gate(&up, &h).unwrap(),
            &spin_state(c(s, 0.0), c(-s, 0.0)),
        );
        assert_state_eq(
            &apply_spin_gate(&down, &h).unwrap(),
            &spin_state(c(-s, 0.0), c(-s, 0.0)),
        );
    }

    #[test]
    fn hadamard_with_quarter_turn_error_has_zero_diagonal() {
        let h = hadamard_gate(FRAC_PI_2, 0.0);
        assert!(h.matrix[0][0].norm() < 1e-15 && h.matrix[1][1].norm() < 1e-15);
        assert!(h.unitarity_defect() < 1e-12);
    }

    #[test]
    fn inverse_after_hadamard_is_full_turn() {
        // R_y(3π/2) R_y(π/2) = R_y(2π) = -I
        let p = inverse_hadamard_gate(0.0, 0.0).compose(&hadamard_gate(0.0, 0.0));
        let minus_identity = [[c(-1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]];
        assert!(max_diff(&p.matrix, &minus_identity) < 1e-12);
        assert!(max_diff(&p.matrix, &ry(2.0 * PI)) < 1e-12);
    }

    #[test]
    fn flip_actions() {
        let f = flip_gate(0.0, 0.0);
        let down = PureState::basis(BasisKet::vacuum(Spin::Down));
        let out = apply_spin_gate(&down, &f).unwrap();
        assert!((out.amplitude(&BasisKet::vacuum(Spin::Up)) - c(-1.0, 0.0)).norm() < 1e-12);

        let full = flip_gate(PI, 0.0);
        assert!(full.unitarity_defect() < 1e-12);
        assert!(max_diff(&full.matrix, &ry(2.0 * PI)) < 1e-12);
    }

    #[test]
    fn flip_z_error_gives_relative_phase() {
        let dz = 0.7;
        let s = FRAC_1_SQRT_2;
        let out = apply_spin_gate(&spin_state(c(s, 0.0), c(s, 0.0)), &flip_gate(0.0, dz)).unwrap();
        let up = out.amplitude(&BasisKet::vacuum(Spin::Up));
        let down = out.amplitude(&BasisKet::vacuum(Spin::Down));
        assert!((up.norm() - s).abs() < 1e-12 && (down.norm() - s).abs() < 1e-12);
        // |↑⟩ → e^{iΔz/2}|↓⟩ and |↓⟩ → -e^{-iΔz/2}|↑⟩
        assert!((down / up + Complex64::from_polar(1.0, dz)).norm() < 1e-12);
    }

    #[test]
    fn gates_match_rotation_products() {
        for (dy, dz) in grid() {
            let h = matmul(&rz(dz), &ry(FRAC_PI_2 + dy));
            let hb = matmul(&rz(dz), &ry(3.0 * FRAC_PI_2 + dy));
            let f = matmul(&rz(dz), &ry(PI + dy));
            assert!(max_diff(&hadamard_gate(dy, dz).matrix, &h) < 1e-12);
            assert!(max_diff(&inverse_hadamard_gate(dy, dz).matrix, &hb) < 1e-12);
            assert!(max_diff(&flip_gate(dy, dz).matrix, &f) < 1e-12);
        }
    }

    #[test]
    fn gates_are_unitary_on_grid() {
        for (dy, dz) in grid() {
            for g in [
                hadamard_gate(dy, dz),
                inverse_hadamard_gate(dy, dz),
                flip_gate(dy, dz),
            ] {
                assert!(g.unitarity_defect() < 1e-12);
            }
        }
    }

    #[test]
    fn epsilon_identity() {
        for k in 0..50 {
            let d = -PI + k as f64 * 0.13;
            assert!((epsilon_plus(d).powi(2) + epsilon_minus(d).powi(2) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_gate_is_noop() {
        let s = spin_state(c(0.6, 0.0), c(0.0, 0.8));
        assert_eq!(apply_spin_gate(&s, &SpinGate::identity()).unwrap(), s);
    }

    #[test]
    fn repeated_gate_matches_matrix_product() {
        let h = hadamard_gate(FRAC_PI_3, FRAC_PI_4);
        let down = PureState::basis(BasisKet::vacuum(Spin::Down));
        let twice = apply_spin_gate(&apply_spin_gate(&down, &h).unwrap(), &h).unwrap();
        let product = apply_spin_gate(&down, &h.compose(&h)).unwrap();
        assert_state_eq(&twice, &product);

        // ideal H·H = R_y(π): |↓⟩ → -|↑⟩
        let hh = hadamard_gate(0.0, 0.0);
        let out = apply_spin_gate(&apply_spin_gate(&down, &hh).unwrap(), &hh).unwrap();
        assert!((out.amplitude(&BasisKet::vacuum(Spin::Up)) - c(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn gate_leaves_photons_untouched() {
        use crate::fock::{ModeAddress, TimeBin};
        let mode = ModeAddress::resonant(1, 1, TimeBin::Late).into();
        let ket = BasisKet::from_occupations(Spin::Down, [(mode, 1)]).unwrap();
        let out = apply_spin_gate(&PureState::basis(ket.clone()), &flip_gate(0.0, 0.0)).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out.amplitude(&ket.with_spin(Spin::Up)).norm() - 1.0).abs() < 1e-12);
    }
}
