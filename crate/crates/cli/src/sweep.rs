//! Per-mechanism fidelity sweeps: closed form against simulation.

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use rss_core::formulas::{self, closed_form, Mechanism};
use rss_core::{
    simulated_fidelity, ErrorModel, InitialSign, ProtocolConfig, RotationError, Step5bMode,
};
use serde::Serialize;
use toml::{Table, Value};

use crate::config::{self, float};

/// Simulation is skipped above these sizes.
pub const MAX_SIM_VERTICES: usize = 6;
pub const MAX_SIM_PHOTONS: usize = 12;
/// Largest photon count accepted for closed-form evaluation.
pub const MAX_PHOTONS: usize = 60;
pub const SELF_CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMechanism {
    Fidelity(Mechanism),
    Boost,
}

pub fn parse_mechanism(s: &str) -> Result<SweepMechanism> {
    if s == "boost" {
        return Ok(SweepMechanism::Boost);
    }
    Mechanism::ALL
        .into_iter()
        .find(|m| m.name() == s)
        .map(SweepMechanism::Fidelity)
        .ok_or_else(|| anyhow!("unknown mechanism {s:?}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub mechanism: &'static str,
    pub blocks: String,
    pub photons: usize,
    pub fs: Option<f64>,
    pub dy: Option<f64>,
    pub dz: Option<f64>,
    pub p: Option<f64>,
    pub closed_form: f64,
    pub simulated: Option<f64>,
    pub abs_diff: Option<f64>,
}

impl SweepRow {
    pub const HEADER: [&'static str; 10] = [
        "mechanism",
        "blocks",
        "photons",
        "fs",
        "dy",
        "dz",
        "p",
        "closed_form",
        "simulated",
        "abs_diff",
    ];

    pub fn record(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(rss_core::fock::format_g12).unwrap_or_default();
        vec![
            self.mechanism.to_string(),
            self.blocks.clone(),
            self.photons.to_string(),
            opt(self.fs),
            opt(self.dy),
            opt(self.dz),
            opt(self.p),
            rss_core::fock::format_g12(self.closed_form),
            opt(self.simulated),
            opt(self.abs_diff),
        ]
    }

    pub fn fails_self_check(&self) -> bool {
        self.abs_diff
            .is_some_and(|d| d.is_nan() || d >= SELF_CHECK_TOL)
    }
}

/// One grid point: a configuration and the swept parameters.
#[derive(Debug, Clone)]
struct Point {
    config: ProtocolConfig,
    fs: Option<f64>,
    rotation: Option<RotationError>,
    p: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub mechanism: Mechanism,
    configs: Vec<ProtocolConfig>,
    fs: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    values: Vec<f64>,
}

/// A list of numbers, or `{ start, stop, steps }` with both ends included.
fn grid(value: &Value, what: &str) -> Result<Vec<f64>> {
    match value {
        Value::Array(a) => a.iter().map(|v| float(v, what)).collect(),
        Value::Table(t) => {
            let get = |k: &str| {
                t.get(k)
                    .ok_or_else(|| anyhow!("{what}: missing {k}"))
                    .and_then(|v| float(v, what))
            };
            let (start, stop) = (get("start")?, get("stop")?);
            let steps = get("steps")? as usize;
            if steps == 0 {
                bail!("{what}: steps must be at least 1");
            }
            if steps == 1 {
                return Ok(vec![start]);
            }
            Ok((0..steps)
                .map(|i| start + (stop - start) * i as f64 / (steps - 1) as f64)
                .collect())
        }
        v => Ok(vec![float(v, what)?]),
    }
}

/// Photon counts: a list, a single integer, or `{ start, stop }` inclusive.
pub fn photon_counts(value: &Value) -> Result<Vec<usize>> {
    let one = |v: &Value| match v {
        Value::Integer(i) if *i >= 1 => Ok(*i as usize),
        _ => bail!("photons: expected positive integers"),
    };
    match value {
        Value::Array(a) => a.iter().map(one).collect(),
        Value::Table(t) => {
            let start = one(t
                .get("start")
                .ok_or_else(|| anyhow!("photons: missing start"))?)?;
            let stop = one(t
                .get("stop")
                .ok_or_else(|| anyhow!("photons: missing stop"))?)?;
            Ok((start..=stop).collect())
        }
        v => Ok(vec![one(v)?]),
    }
}

/// Configuration with `k` photons suited to `mechanism`: one vertex of `k`
/// single-photon sub-vertices for inter-sub-vertex flips, otherwise a chain
/// of `k` single-photon vertices.
pub fn scaling_config(
    mechanism: Mechanism,
    k: usize,
    mode: Step5bMode,
    sign: InitialSign,
) -> Result<ProtocolConfig> {
    let blocks = if mechanism == Mechanism::Step5a {
        vec![vec![1; k]]
    } else {
        vec![vec![1]; k]
    };
    Ok(ProtocolConfig::new(blocks, mode, sign)?)
}

impl SweepSpec {
    pub fn from_table(table: &Table) -> Result<(SweepMechanism, Option<SweepSpec>, BoostGrid)> {
        let sweep =
            config::section(table, "sweep")?.ok_or_else(|| anyhow!("missing [sweep] section"))?;
        for key in sweep.keys() {
            if !matches!(
                key.as_str(),
                "mechanism" | "fs" | "dy" | "dz" | "values" | "photons" | "eta" | "m"
            ) {
                bail!("[sweep]: unknown key {key:?}");
            }
        }
        let mechanism = sweep
            .get("mechanism")
            .and_then(Value::as_str)
            .ok_or_else(|| anyhow!("[sweep]: mechanism must be a string"))
            .and_then(parse_mechanism)?;
        let list = |key: &str, default: f64| -> Result<Vec<f64>> {
            match sweep.get(key) {
                Some(v) => grid(v, key),
                None => Ok(vec![default]),
            }
        };
        let mechanism = match mechanism {
            SweepMechanism::Boost => {
                let eta = list("eta", 0.95)?;
                let m = match sweep.get("m") {
                    Some(v) => photon_counts(v)
                        .context("m")?
                        .into_iter()
                        .map(|m| m as u32)
                        .collect(),
                    None => (1..=10).collect(),
                };
                let boost = BoostGrid { eta, m };
                boost.validate()?;
                return Ok((SweepMechanism::Boost, None, boost));
            }
            SweepMechanism::Fidelity(m) => m,
        };
        let protocol = config::section(table, "protocol")?;
        let configs = match sweep.get("photons") {
            Some(v) => {
                if protocol.is_some_and(|p| {
                    p.contains_key("blocks")
                        || p.contains_key("vertices")
                        || p.contains_key("qubits")
                }) {
                    bail!("[sweep]: photons replaces the [protocol] shape; give one or the other");
                }
                let (mode, sign) = config::mode_and_sign(protocol)?;
                photon_counts(v)?
                    .into_iter()
                    .map(|k| {
                        if k > MAX_PHOTONS {
                            bail!("photons: {k} exceeds the limit of {MAX_PHOTONS}");
                        }
                        scaling_config(mechanism, k, mode, sign)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            None => vec![config::protocol_config(protocol)?],
        };
        let spec = SweepSpec {
            mechanism,
            configs,
            fs: list("fs", 1.0)?,
            dy: list("dy", 0.0)?,
            dz: list("dz", 0.0)?,
            values: list("values", default_value(mechanism))?,
        };
        spec.validate()?;
        Ok((
            SweepMechanism::Fidelity(mechanism),
            Some(spec),
            BoostGrid::default(),
        ))
    }

    fn validate(&self) -> Result<()> {
        let unit = |name: &str, xs: &[f64]| -> Result<()> {
            if let Some(x) = xs.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                bail!("{name} = {x} is outside [0, 1]");
            }
            Ok(())
        };
        let finite = |name: &str, xs: &[f64]| -> Result<()> {
            if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
                bail!("{name} = {x} is not finite");
            }
            Ok(())
        };
        unit("fs", &self.fs)?;
        unit("values", &self.values)?;
        finite("dy", &self.dy)?;
        finite("dz", &self.dz)?;
        for c in &self.configs {
            if c.total_photons() > MAX_PHOTONS {
                bail!(
                    "{} photons exceeds the limit of {MAX_PHOTONS}",
                    c.total_photons()
                );
            }
        }
        Ok(())
    }

    fn points(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for config in &self.configs {
            let mut push = |fs, rotation, p| {
                out.push(Point {
                    config: config.clone(),
                    fs,
                    rotation,
                    p,
                })
            };
            match self.mechanism {
                Mechanism::SpinPrep => {
                    for &fs in &self.fs {
                        for &dy in &self.dy {
                            for &dz in &self.dz {
                                push(Some(fs), Some(RotationError::new(dy, dz)), None);
                            }
                        }
                    }
                }
                Mechanism::Step3 | Mechanism::Step5a | Mechanism::Step5b => {
                    for &dy in &self.dy {
                        for &dz in &self.dz {
                            push(None, Some(RotationError::new(dy, dz)), None);
                        }
                    }
                }
                _ => {
                    for &p in &self.values {
                        push(None, None, Some(p));
                    }
                }
            }
        }
        out
    }

    /// Evaluates every grid point, concurrently, in grid order.
    pub fn run(&self, closed_form_only: bool) -> Result<Vec<SweepRow>> {
        self.points()
            .par_iter()
            .map(|pt| evaluate(self.mechanism, pt, closed_form_only))
            .collect()
    }
}

fn default_value(mechanism: Mechanism) -> f64 {
    match mechanism {
        Mechanism::OffResonant | Mechanism::Loss => 0.0,
        _ => 1.0,
    }
}

fn errors_for(mechanism: Mechanism, pt: &Point) -> ErrorModel {
    let mut e = ErrorModel::ideal();
    if let Some(fs) = pt.fs {
        e.spin_init_fidelity = fs;
    }
    if let Some(r) = pt.rotation {
        match mechanism {
            Mechanism::SpinPrep => e.step1b = r,
            Mechanism::Step3 => e.step3.default = r,
            Mechanism::Step5a => e.step5a.default = r,
            Mechanism::Step5b => e.step5b.default = r,
            _ => {}
        }
    }
    if let Some(p) = pt.p {
        match mechanism {
            Mechanism::Excitation => e.excitation.default = p,
            Mechanism::OffResonant => e.off_resonant.default = p,
            Mechanism::Cyclicity => e.cyclicity.default = p,
            Mechanism::Loss => {
                e.loss_early.default = p;
                e.loss_late.default = p;
            }
            _ => {}
        }
    }
    e
}

pub fn simulable(config: &ProtocolConfig) -> bool {
    config.vertices() <= MAX_SIM_VERTICES && config.total_photons() <= MAX_SIM_PHOTONS
}

pub fn blocks_label(config: &ProtocolConfig) -> String {
    config
        .all_blocks()
        .iter()
        .map(|b| b.iter().map(usize::to_string).collect::<Vec<_>>().join("+"))
        .collect::<Vec<_>>()
        .join("|")
}

fn evaluate(mechanism: Mechanism, pt: &Point, closed_form_only: bool) -> Result<SweepRow> {
    let errors = errors_for(mechanism, pt);
    let closed = closed_form(mechanism, &pt.config, &errors)?.value;
    let simulated = if closed_form_only || !simulable(&pt.config) {
        None
    } else {
        Some(simulated_fidelity(&pt.config, &errors)?)
    };
    log::debug!(
        "{} {} -> {closed}",
        mechanism.name(),
        blocks_label(&pt.config)
    );
    Ok(SweepRow {
        mechanism: mechanism.name(),
        blocks: blocks_label(&pt.config),
        photons: pt.config.total_photons(),
        fs: pt.fs,
        dy: pt.rotation.map(|r| r.dy),
        dz: pt.rotation.map(|r| r.dz),
        p: pt.p,
        closed_form: closed,
        abs_diff: simulated.map(|s| (s - closed).abs()),
        simulated,
    })
}

/// Grid for the boosted-fusion scan.
#[derive(Debug, Clone, Default)]
pub struct BoostGrid {
    pub eta: Vec<f64>,
    pub m: Vec<u32>,
}

impl BoostGrid {
    pub fn validate(&self) -> Result<()> {
        if self.eta.is_empty() || self.m.is_empty() {
            bail!("boost grid is empty");
        }
        if let Some(x) = self.eta.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            bail!("eta = {x} is outside [0, 1]");
        }
        if self.m.contains(&0) {
            bail!("m must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoostRow {
    pub eta: f64,
    pub m: u32,
    pub closed_form: f64,
    pub monte_carlo: Option<f64>,
    pub stderr: Option<f64>,
    pub optimal_m: u32,
}

impl BoostRow {
    pub const HEADER: [&'static str; 6] = [
        "eta",
        "m",
        "closed_form",
        "monte_carlo",
        "stderr",
        "optimal_m",
    ];

    pub fn record(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(rss_core::fock::format_g12).unwrap_or_default();
        vec![
            rss_core::fock::format_g12(self.eta),
            self.m.to_string(),
            rss_core::fock::format_g12(self.closed_form),
            opt(self.monte_carlo),
            opt(self.stderr),
            self.optimal_m.to_string(),
        ]
    }
}

/// Closed form and, when `trials > 0`, a Monte Carlo estimate per grid
/// point. Each point uses the same seed.
pub fn boost_scan(grid: &BoostGrid, trials: u64, seed: u64) -> Result<Vec<BoostRow>> {
    grid.validate()?;
    let mut rows = Vec::new();
    for &eta in &grid.eta {
        let (optimal_m, _) = formulas::optimal_m(eta)?;
        for &m in &grid.m {
            let closed_form = formulas::boosted_fusion_success(m, eta)?;
            let (monte_carlo, stderr) = if trials > 0 {
                let rate = rss_core::fusion::boosted_fusion_rate(m, eta, trials, seed)?;
                (
                    Some(rate),
                    Some((rate * (1.0 - rate) / trials as f64).sqrt()),
                )
            } else {
                (None, None)
            };
            rows.push(BoostRow {
                eta,
                m,
                closed_form,
                monte_carlo,
                stderr,
                optimal_m,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> (SweepMechanism, Option<SweepSpec>, BoostGrid) {
        SweepSpec::from_table(&text.parse().unwrap()).unwrap()
    }

    #[test]
    fn grid_forms() {
        assert_eq!(grid(&Value::Float(0.5), "x").unwrap(), vec![0.5]);
        let t: Table = "g = { start = 0.0, stop = 1.0, steps = 5 }"
            .parse()
            .unwrap();
        assert_eq!(grid(&t["g"], "g").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn spin_prep_rows() {
        let (_, s, _) = spec("[sweep]\nmechanism = \"spin_prep\"\ndy = [0.0, 1.5707963267948966]");
        let rows = s.unwrap().run(false).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[0].closed_form - 1.0).abs() < 1e-12);
        assert!((rows[1].closed_form - 0.5).abs() < 1e-12);
        assert!(rows.iter().all(|r| !r.fails_self_check()));
    }

    #[test]
    fn loss_scaling_goes_closed_form_only_past_the_cap() {
        let (_, s, _) = spec(
            "[sweep]\nmechanism = \"loss\"\nvalues = [0.01]\nphotons = { start = 1, stop = 60 }",
        );
        let rows = s.unwrap().run(false).unwrap();
        assert_eq!(rows.len(), 60);
        for (k, r) in rows.iter().enumerate() {
            let expected = 0.99f64.powi(k as i32 + 1);
            assert!((r.closed_form - expected).abs() < 1e-12);
            assert_eq!(r.simulated.is_some(), k < MAX_SIM_VERTICES);
        }
    }

    #[test]
    fn step3_grid_is_symmetric() {
        let (_, s, _) = spec("[sweep]\nmechanism = \"step3\"\ndy = { start = -1.0, stop = 1.0, steps = 5 }\n[protocol]\nvertices = 1\nqubits = 2");
        let rows = s.unwrap().run(false).unwrap();
        for i in 0..rows.len() {
            assert!((rows[i].closed_form - rows[rows.len() - 1 - i].closed_form).abs() < 1e-12);
        }
    }

    #[test]
    fn boost_grid() {
        let (m, s, g) = spec("[sweep]\nmechanism = \"boost\"\neta = [0.8, 0.95]\nm = [1, 2, 3]");
        assert_eq!(m, SweepMechanism::Boost);
        assert!(s.is_none());
        let rows = boost_scan(&g, 0, 1).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].optimal_m, 1);
        assert_eq!(rows[5].optimal_m, 3);
        assert!((rows[5].closed_form - 0.6432).abs() < 5e-4);
    }

    #[test]
    fn self_check_threshold() {
        let (_, s, _) = spec("[sweep]\nmechanism = \"loss\"\nvalues = [0.1]");
        let mut row = s.unwrap().run(false).unwrap().remove(0);
        assert!(!row.fails_self_check());
        row.abs_diff = Some(2e-9);
        assert!(row.fails_self_check());
        row.abs_diff = Some(f64::NAN);
        assert!(row.fails_self_check());
        row.abs_diff = None;
        assert!(!row.fails_self_check());
    }

    #[test]
    fn domain_violations_are_rejected() {
        let bad = [
            "[sweep]\nmechanism = \"loss\"\nvalues = [1.2]",
            "[sweep]\nmechanism = \"nope\"",
            "[sweep]\nmechanism = \"loss\"\nphotons = 61",
        ];
        for text in bad {
            assert!(
                SweepSpec::from_table(&text.parse().unwrap()).is_err(),
                "{text}"
            );
        }
    }
}
