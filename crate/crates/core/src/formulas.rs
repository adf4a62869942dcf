//! Closed-form fidelities for single error mechanisms, and boosted fusion
//! success.

use num_complex::Complex64;
use thiserror::Error;

use crate::fock::TimeBin;
use crate::protocol::{ErrorModel, ProtocolConfig, RotationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulaError {
    #[error("{name} = {value} is outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("boost level m must be at least 1")]
    BoostLevel,
    #[error("at least one vertex is required")]
    Empty,
    #[error("{0} differs between the early and late bins of qubit ({1},{2})")]
    BinMismatch(&'static str, usize, usize),
}

pub type Result<T> = std::result::Result<T, FormulaError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mechanism {
    SpinPrep,
    Step3,
    Step5a,
    Step5b,
    Excitation,
    OffResonant,
    Cyclicity,
    Loss,
}

impl Mechanism {
    pub const ALL: [Mechanism; 8] = [
        Mechanism::SpinPrep,
        Mechanism::Step3,
        Mechanism::Step5a,
        Mechanism::Step5b,
        Mechanism::Excitation,
        Mechanism::OffResonant,
        Mechanism::Cyclicity,
        Mechanism::Loss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::SpinPrep => "spin_prep",
            Mechanism::Step3 => "step3",
            Mechanism::Step5a => "step5a",
            Mechanism::Step5b => "step5b",
            Mechanism::Excitation => "excitation",
            Mechanism::OffResonant => "off_resonant",
            Mechanism::Cyclicity => "cyclicity",
            Mechanism::Loss => "loss",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityResult {
    pub value: f64,
    pub mechanism: Mechanism,
    pub parameters: Vec<(String, f64)>,
}

fn probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(FormulaError::Probability { name, value })
    }
}

fn clamp(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

pub fn fidelity_spin_prep(fs: f64, dy: f64, dz: f64) -> Result<f64> {
    let fs = probability("F_s", fs)?;
    Ok(clamp(0.5 * ((2.0 * fs - 1.0) * dy.cos() * dz.cos() + 1.0)))
}

/// `errors[n][j]` is the error on the flip inside sub-vertex `j` of vertex `n`.
pub fn fidelity_step3_flip(errors: &[Vec<RotationError>]) -> f64 {
    let amplitude: f64 = errors
        .iter()
        .map(|vertex| {
            let dz: f64 = vertex.iter().map(|e| e.dz).sum();
            (dz / 2.0).cos() * vertex.iter().map(|e| (e.dy / 2.0).cos()).product::<f64>()
        })
        .product();
    clamp(amplitude * amplitude)
}

/// `errors[n][j]` is the error on the flip between sub-vertices `j` and `j+1`.
pub fn fidelity_step5a(errors: &[Vec<RotationError>]) -> f64 {
    fidelity_step3_flip(errors)
}

fn epsilon(x: usize, delta: f64) -> f64 {
    let s = (delta / 2.0).sin();
    (delta / 2.0).cos() + if x.is_multiple_of(2) { s } else { -s }
}

/// Fidelity under Hadamard-type closing errors, one per vertex, via
/// `f_a = e^{iΔz_a/2} (ε_a f_{a-1} + ε_{a+1} f*_{a-1})` with `f_0 = 1`.
/// This is the alternating sequence started from the `+` superposition.
pub fn fidelity_step5b(errors: &[RotationError]) -> Result<f64> {
    let inverse: Vec<bool> = (1..=errors.len()).map(|a| a % 2 == 1).collect();
    fidelity_step5b_gates(errors, &inverse)
}

/// General form of [`fidelity_step5b`] for any closing sequence:
/// `inverse[a-1]` tells whether vertex `a` is closed by the inverse
/// Hadamard. The ε index of vertex `a` has the parity of that choice.
pub fn fidelity_step5b_gates(errors: &[RotationError], inverse: &[bool]) -> Result<f64> {
    if errors.is_empty() {
        return Err(FormulaError::Empty);
    }
    assert_eq!(errors.len(), inverse.len(), "one gate type per vertex");
    let mut f = Complex64::new(1.0, 0.0);
    for (e, &inv) in errors.iter().zip(inverse) {
        let x = usize::from(inv);
        f = Complex64::from_polar(1.0, e.dz / 2.0)
            * (epsilon(x, e.dy) * f + epsilon(x + 1, e.dy) * f.conj());
    }
    let scale = 2f64.powi(errors.len() as i32 + 1);
    let v = (f + f.conj()) / scale;
    Ok(clamp(v.norm_sqr()))
}

fn product_of(name: &'static str, values: &[f64], f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut acc = 1.0;
    for &v in values {
        acc *= f(probability(name, v)?);
    }
    Ok(clamp(acc))
}

pub fn fidelity_excitation(p_gamma: &[f64]) -> Result<f64> {
    product_of("p_gamma", p_gamma, |p| p)
}

pub fn fidelity_off_resonant(p_up: &[f64]) -> Result<f64> {
    product_of("p_up", p_up, |p| 1.0 - p)
}

pub fn fidelity_cyclicity(p_return: &[f64]) -> Result<f64> {
    product_of("p_return", p_return, |p| p)
}

/// `q` holds the retention probability of every photon.
pub fn fidelity_loss(q: &[f64]) -> Result<f64> {
    product_of("q", q, |q| q)
}

/// Cyclicity implied by a Purcell factor: `C = F_P / (F_P + 1)`.
pub fn cyclicity_from_purcell(purcell: f64) -> f64 {
    purcell / (purcell + 1.0)
}

/// `P(m, η) = (1 - 2^{-m}) η^{2m}`.
pub fn boosted_fusion_success(m: u32, eta: f64) -> Result<f64> {
    if m < 1 {
        return Err(FormulaError::BoostLevel);
    }
    let eta = probability("eta", eta)?;
    Ok((1.0 - 0.5f64.powi(m as i32)) * eta.powi(2 * m as i32))
}

pub const OPTIMAL_M_SCAN: u32 = 64;

/// The boost level in `1..=64` maximising `P(m, η)`, with its value. Ties go
/// to the smaller `m`.
pub fn optimal_m(eta: f64) -> Result<(u32, f64)> {
    let mut best = (1, boosted_fusion_success(1, eta)?);
    for m in 2..=OPTIMAL_M_SCAN {
        let p = boosted_fusion_success(m, eta)?;
        if p > best.1 {
            best = (m, p);
        }
    }
    Ok(best)
}

fn per_qubit(
    config: &ProtocolConfig,
    name: &'static str,
    get: impl Fn(usize, usize, TimeBin) -> f64,
) -> Result<Vec<f64>> {
    config
        .qubit_indices()
        .map(|(n, m)| {
            let e = get(n, m, TimeBin::Early);
            if e != get(n, m, TimeBin::Late) {
                return Err(FormulaError::BinMismatch(name, n, m));
            }
            Ok(e)
        })
        .collect()
}

/// Evaluates the closed form for `mechanism`, reading its parameters from
/// `errors`. Other mechanisms in `errors` are ignored.
pub fn closed_form(
    mechanism: Mechanism,
    config: &ProtocolConfig,
    errors: &ErrorModel,
) -> Result<FidelityResult> {
    let mut parameters = Vec::new();
    let value = match mechanism {
        Mechanism::SpinPrep => {
            let (fs, e) = (errors.spin_init_fidelity, errors.step1b);
            parameters = vec![("F_s".into(), fs), ("dy".into(), e.dy), ("dz".into(), e.dz)];
            fidelity_spin_prep(fs, e.dy, e.dz)?
        }
        Mechanism::Step3 => {
            let grid: Vec<Vec<RotationError>> = (1..=config.vertices())
                .map(|n| {
                    (1..=config.blocks(n).len())
                        .map(|j| errors.step3.get((n, j)))
                        .collect()
                })
                .collect();
            fidelity_step3_flip(&grid)
        }
        Mechanism::Step5a => {
            let grid: Vec<Vec<RotationError>> = (1..=config.vertices())
                .map(|n| {
                    (1..config.blocks(n).len())
                        .map(|j| errors.step5a.get((n, j)))
                        .collect()
                })
                .collect();
            fidelity_step5a(&grid)
        }
        Mechanism::Step5b => {
            let list: Vec<RotationError> = (1..=config.vertices())
                .map(|n| errors.step5b.get(n))
                .collect();
            let inverse: Vec<bool> = (1..=config.vertices())
                .map(|n| config.step5b_is_inverse(n))
                .collect();
            fidelity_step5b_gates(&list, &inverse)?
        }
        Mechanism::Excitation => {
            fidelity_excitation(&per_qubit(config, "excitation", |n, m, b| {
                errors.excitation.get((n, m, b))
            })?)?
        }
        Mechanism::OffResonant => {
            fidelity_off_resonant(&per_qubit(config, "off_resonant", |n, m, b| {
                errors.off_resonant.get((n, m, b))
            })?)?
        }
        Mechanism::Cyclicity => fidelity_cyclicity(&per_qubit(config, "cyclicity", |n, m, b| {
            errors.cyclicity.get((n, m, b))
        })?)?,
        Mechanism::Loss => {
            let q = per_qubit(config, "loss", |n, m, b| match b {
                TimeBin::Early => errors.loss_early.get((n, m)),
                TimeBin::Late => errors.loss_late.get((n, m)),
            })?;
            let q: Vec<f64> = q.into_iter().map(|p| 1.0 - p).collect();
            fidelity_loss(&q)?
        }
    };
    if parameters.is_empty() {
        parameters.push(("photons".into(), config.total_photons() as f64));
    }
    Ok(FidelityResult {
        value,
        mechanism,
        parameters,
    })
}
