//! Fusion scenarios.
//!
//! ```toml
//! [protocol]          # shape of each fused resource state
//! vertices = 1
//! qubits = 2
//!
//! [errors]            # both sides
//! [errors_a]          # side a only, on top of [errors]
//! [errors_b]
//!
//! [fusion]
//! number_resolving = true
//! discriminate_channels = true
//! step3_both_sides = false
//! single_photon_input = false
//! cyclicity_errors = false
//!
//! [boost]             # optional Monte Carlo
//! m = 3
//! eta = 0.95
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rss_core::formulas;
use rss_core::fusion::{
    apply_fusion_transfer, boosted_fusion_rate, boosted_fusion_trial, measure_detectors,
    success_probability, two_vertex_fusion_input, DetectorModel, FusionContext,
};
use serde::Serialize;
use toml::{Table, Value};

use crate::config::{self, float};

#[derive(Debug, Clone, Serialize)]
pub struct EventRow {
    pub observed: String,
    pub true_counts: String,
    pub probability: f64,
    pub classification: &'static str,
}

impl EventRow {
    pub const HEADER: [&'static str; 4] =
        ["observed", "true_counts", "probability", "classification"];

    pub fn record(&self) -> Vec<String> {
        vec![
            self.observed.clone(),
            self.true_counts.clone(),
            rss_core::fock::format_g12(self.probability),
            self.classification.into(),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoostReport {
    pub m: u32,
    pub eta: f64,
    pub closed_form: f64,
    pub monte_carlo: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FusionReport {
    pub success_probability: f64,
    pub classification_table: BTreeMap<&'static str, f64>,
    pub events: Vec<EventRow>,
    pub boost: Option<BoostReport>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    config: rss_core::ProtocolConfig,
    errors_a: rss_core::ErrorModel,
    errors_b: rss_core::ErrorModel,
    detectors: DetectorModel,
    context: FusionContext,
    boost: Option<(u32, f64)>,
}

fn merged(base: Option<&Table>, side: Option<&Table>) -> Option<Table> {
    match (base, side) {
        (None, None) => None,
        _ => {
            let mut t = base.cloned().unwrap_or_default();
            if let Some(side) = side {
                t.extend(side.iter().map(|(k, v)| (k.clone(), v.clone())));
            }
            Some(t)
        }
    }
}

fn flag(table: &Table, key: &str, default: bool) -> Result<bool> {
    match table.get(key) {
        None => Ok(default),
        Some(Value::Boolean(b)) => Ok(*b),
        Some(_) => bail!("[fusion]: {key} must be true or false"),
    }
}

impl Scenario {
    pub fn from_table(table: &Table) -> Result<Scenario> {
        for key in table.keys() {
            if !matches!(
                key.as_str(),
                "protocol" | "errors" | "errors_a" | "errors_b" | "fusion" | "boost"
            ) {
                bail!("unknown section [{key}]");
            }
        }
        let config = config::protocol_config(config::section(table, "protocol")?)?;
        let base = config::section(table, "errors")?;
        let side = |name: &str| -> Result<rss_core::ErrorModel> {
            let t = merged(base, config::section(table, name)?);
            config::error_model(t.as_ref(), &config).with_context(|| format!("[{name}]"))
        };
        let (errors_a, errors_b) = (side("errors_a")?, side("errors_b")?);
        let empty = Table::new();
        let fusion = config::section(table, "fusion")?.unwrap_or(&empty);
        for key in fusion.keys() {
            if !matches!(
                key.as_str(),
                "number_resolving"
                    | "discriminate_channels"
                    | "step3_both_sides"
                    | "single_photon_input"
                    | "cyclicity_errors"
            ) {
                bail!("[fusion]: unknown key {key:?}");
            }
        }
        let detectors = DetectorModel {
            number_resolving: flag(fusion, "number_resolving", true)?,
            discriminate_channels: flag(fusion, "discriminate_channels", true)?,
        };
        let context = FusionContext {
            step3_both_sides: flag(fusion, "step3_both_sides", false)?,
            single_photon_input: flag(fusion, "single_photon_input", false)?,
            cyclicity_errors: flag(fusion, "cyclicity_errors", false)?,
        };
        let boost = match config::section(table, "boost")? {
            None => None,
            Some(b) => {
                let m = match b.get("m") {
                    Some(Value::Integer(m)) if *m >= 1 => *m as u32,
                    _ => bail!("[boost]: m must be a positive integer"),
                };
                let eta = float(
                    b.get("eta")
                        .ok_or_else(|| anyhow!("[boost]: missing eta"))?,
                    "eta",
                )?;
                if !(0.0..=1.0).contains(&eta) {
                    bail!("[boost]: eta = {eta} is outside [0, 1]");
                }
                Some((m, eta))
            }
        };
        if config.total_photons() == 1 {
            log::warn!("a lone single-photon vertex is a product state once its spin is measured; fusion cannot entangle it");
        }
        Ok(Scenario {
            config,
            errors_a,
            errors_b,
            detectors,
            context,
            boost,
        })
    }

    pub fn run(&self, trials: u64, seed: u64) -> Result<FusionReport> {
        let input = two_vertex_fusion_input(&self.config, &self.errors_a, &self.errors_b)?;
        let out = apply_fusion_transfer(&input)?;
        let events = measure_detectors(&out, self.detectors, &self.context)?;
        let mut table: BTreeMap<&'static str, f64> = BTreeMap::new();
        for e in &events {
            *table.entry(e.classification.label()).or_default() += e.probability;
        }
        let rows = events
            .iter()
            .map(|e| EventRow {
                observed: e.observed.to_string(),
                true_counts: e.true_counts.to_string(),
                probability: e.probability,
                classification: e.classification.label(),
            })
            .collect();
        let boost = match self.boost {
            Some((m, eta)) if trials > 0 => {
                let rate = boosted_fusion_rate(m, eta, trials, seed)?;
                Some(BoostReport {
                    m,
                    eta,
                    closed_form: formulas::boosted_fusion_success(m, eta)?,
                    monte_carlo: rate,
                    stderr: (rate * (1.0 - rate) / trials as f64).sqrt(),
                    trials,
                    seed,
                })
            }
            _ => None,
        };
        Ok(FusionReport {
            success_probability: success_probability(&events),
            classification_table: table,
            events: rows,
            boost,
        })
    }

    /// Writes one JSON line per Monte Carlo trial.
    pub fn write_records(&self, path: &Path, trials: u64, seed: u64) -> Result<()> {
        let (m, eta) = self
            .boost
            .ok_or_else(|| anyhow!("trial records need a [boost] section"))?;
        let file =
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = std::io::BufWriter::new(file);
        for t in 0..trials {
            let record = boosted_fusion_trial(m, eta, seed, t)?;
            serde_json::to_writer(&mut w, &record)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str) -> FusionReport {
        Scenario::from_table(&text.parse().unwrap())
            .unwrap()
            .run(20_000, 7)
            .unwrap()
    }

    #[test]
    fn ideal_scenario_is_half() {
        let r = run("[protocol]\nqubits = 2");
        assert!((r.success_probability - 0.5).abs() < 1e-10);
        assert!(r.boost.is_none());
    }

    #[test]
    fn one_sided_flip_error_is_zero() {
        let r = run("[protocol]\nqubits = 2\n[errors_a]\nstep3 = { dy = 3.141592653589793 }");
        assert!(r.success_probability < 1e-12);
    }

    #[test]
    fn boost_section() {
        let r = run("[protocol]\nqubits = 2\n[boost]\nm = 3\neta = 0.95");
        let b = r.boost.unwrap();
        assert!((b.closed_form - 0.6432).abs() < 5e-4);
        assert!((b.monte_carlo - b.closed_form).abs() < 4.0 / (b.trials as f64).sqrt());
    }

    #[test]
    fn side_tables_layer_on_the_shared_one() {
        let t: Table =
            "[protocol]\nqubits = 2\n[errors]\ncyclicity = 0.9\n[errors_b]\ncyclicity = 0.8"
                .parse()
                .unwrap();
        let s = Scenario::from_table(&t).unwrap();
        assert_eq!(s.errors_a.cyclicity.default, 0.9);
        assert_eq!(s.errors_b.cyclicity.default, 0.8);
    }
}
