//! `rss`: simulate resource-state generation, sweep fidelity closed forms
//! against simulation, run fusion scenarios and scan boosted fusion.
//!
//! Exit codes: 0 success, 1 self-check failure or runtime error, 2 usage or
//! input error. Verbosity follows `RSS_LOG` (e.g. `RSS_LOG=debug`).

mod config;
mod fusion_cmd;
mod sweep;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sweep::{BoostGrid, BoostRow, SweepMechanism, SweepRow, SweepSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    /// Plain state dump (generate only).
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "rss", version, about = "Spin-photon resource-state simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one protocol run and report its fidelity to the target.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Evaluate a fidelity closed form over a grid and check it against
    /// simulation.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Skip simulation entirely.
        #[arg(long)]
        closed_form_only: bool,
        /// Monte Carlo trials for the boost mechanism (0 disables).
        #[arg(long, default_value_t = 0)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run a two-vertex fusion scenario.
    Fusion {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write every boosted-fusion trial as JSON lines.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Boosted fusion success against redundancy and efficiency.
    BoostScan {
        /// Efficiencies to scan.
        #[arg(long, value_delimiter = ',', default_value = "0.8,0.9,0.95,1")]
        eta: Vec<f64>,
        /// Largest redundancy; rows cover 1..=m-max.
        #[arg(long, default_value_t = 10)]
        m_max: u32,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

enum Failure {
    Usage(anyhow::Error),
    SelfCheck(String),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::SelfCheck(_) | Failure::Runtime(_) => 1,
        }
    }
}

fn usage(e: anyhow::Error) -> Failure {
    Failure::Usage(e)
}

fn runtime(e: anyhow::Error) -> Failure {
    Failure::Runtime(e)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(bytes).and_then(|()| stdout.flush()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

fn csv_bytes<const N: usize>(
    header: [&str; N],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn only_tabular(format: Format, command: &str) -> Result<(), Failure> {
    if format == Format::Text {
        return Err(usage(anyhow::anyhow!(
            "{command}: --format text is only available for generate"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct GeneratedTerm {
    amplitude_re: f64,
    amplitude_im: f64,
    ket: String,
}

#[derive(Serialize)]
struct GeneratedComponent {
    weight: f64,
    terms: Vec<GeneratedTerm>,
}

#[derive(Serialize)]
struct GeneratedState {
    blocks: String,
    photons: usize,
    fidelity: f64,
    components: Vec<GeneratedComponent>,
}

fn generate(path: &Path, out: Option<&Path>, format: Format) -> Result<(), Failure> {
    let table = config::read_table(path).map_err(usage)?;
    for key in table.keys() {
        if key != "protocol" && key != "errors" {
            return Err(usage(anyhow::anyhow!(
                "generate: unexpected section [{key}]"
            )));
        }
    }
    let protocol = config::protocol_config(config::section(&table, "protocol").map_err(usage)?)
        .map_err(usage)?;
    let errors = config::error_model(config::section(&table, "errors").map_err(usage)?, &protocol)
        .map_err(usage)?;
    if !sweep::simulable(&protocol) {
        return Err(usage(anyhow::anyhow!(
            "simulation is limited to {} vertices and {} photons",
            sweep::MAX_SIM_VERTICES,
            sweep::MAX_SIM_PHOTONS
        )));
    }
    let mixture = rss_core::run_protocol(&protocol, &errors).map_err(|e| runtime(e.into()))?;
    let target = rss_core::targets::target_state(&rss_core::targets::TargetSpec::from(&protocol));
    let fidelity = rss_core::fock::fidelity(&mixture.trace_loss_modes(), &target)
        .map_err(|e| runtime(e.into()))?;
    log::info!("fidelity {fidelity}");
    let generated = || GeneratedState {
        blocks: sweep::blocks_label(&protocol),
        photons: protocol.total_photons(),
        fidelity,
        components: mixture
            .components()
            .iter()
            .map(|c| GeneratedComponent {
                weight: c.probability,
                terms: c
                    .state
                    .terms()
                    .map(|(k, a)| GeneratedTerm {
                        amplitude_re: a.re,
                        amplitude_im: a.im,
                        ket: k.to_string(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let g = rss_core::fock::format_g12;
    let bytes = match format {
        Format::Text => {
            let mut s = format!(
                "blocks {}\nphotons {}\nfidelity {}\n",
                sweep::blocks_label(&protocol),
                protocol.total_photons(),
                g(fidelity)
            );
            for (i, c) in mixture.components().iter().enumerate() {
                s.push_str(&format!(
                    "component {} weight {}\n",
                    i + 1,
                    g(c.probability)
                ));
                s.push_str(&c.state.to_debug_string());
            }
            s.into_bytes()
        }
        Format::Json => json_bytes(&generated()).map_err(runtime)?,
        Format::Csv => {
            let state = generated();
            let rows = state.components.iter().enumerate().flat_map(|(i, c)| {
                c.terms.iter().map(move |t| {
                    vec![
                        (i + 1).to_string(),
                        g(c.weight),
                        g(t.amplitude_re),
                        g(t.amplitude_im),
                        t.ket.clone(),
                        g(fidelity),
                    ]
                })
            });
            csv_bytes(
                [
                    "component",
                    "weight",
                    "amplitude_re",
                    "amplitude_im",
                    "ket",
                    "fidelity",
                ],
                rows,
            )
            .map_err(runtime)?
        }
    };
    emit(out, &bytes).map_err(runtime)
}

fn write_boost(rows: &[BoostRow], out: Option<&Path>, format: Format) -> Result<(), Failure> {
    let bytes = match format {
        Format::Json => json_bytes(&rows),
        _ => csv_bytes(BoostRow::HEADER, rows.iter().map(BoostRow::record)),
    }
    .map_err(runtime)?;
    emit(out, &bytes).map_err(runtime)
}

fn run_sweep(
    path: &Path,
    out: Option<&Path>,
    format: Format,
    closed_form_only: bool,
    trials: u64,
    seed: u64,
) -> Result<(), Failure> {
    only_tabular(format, "sweep")?;
    let table = config::read_table(path).map_err(usage)?;
    if table.contains_key("errors") {
        log::warn!("sweep: [errors] is ignored; each row varies only the swept mechanism");
    }
    let (mechanism, spec, boost) = SweepSpec::from_table(&table).map_err(usage)?;
    let spec = match (mechanism, spec) {
        (SweepMechanism::Boost, _) => {
            let rows = sweep::boost_scan(&boost, trials, seed).map_err(runtime)?;
            return write_boost(&rows, out, format);
        }
        (_, Some(spec)) => spec,
        (_, None) => unreachable!("fidelity sweeps carry a spec"),
    };
    let rows: Vec<SweepRow> = spec.run(closed_form_only).map_err(runtime)?;
    let bytes = match format {
        Format::Json => json_bytes(&rows),
        _ => csv_bytes(SweepRow::HEADER, rows.iter().map(SweepRow::record)),
    }
    .map_err(runtime)?;
    emit(out, &bytes).map_err(runtime)?;
    let failed: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.fails_self_check())
        .map(|(i, _)| i + 1)
        .collect();
    if !failed.is_empty() {
        return Err(Failure::SelfCheck(format!(
            "{} row(s) differ from simulation by at least {:e}: rows {:?}",
            failed.len(),
            sweep::SELF_CHECK_TOL,
            failed
        )));
    }
    Ok(())
}

fn run_fusion(
    path: &Path,
    out: Option<&Path>,
    format: Format,
    trials: u64,
    seed: u64,
    records: Option<&Path>,
) -> Result<(), Failure> {
    only_tabular(format, "fusion")?;
    let table = config::read_table(path).map_err(usage)?;
    let scenario = fusion_cmd::Scenario::from_table(&table).map_err(usage)?;
    let report = scenario.run(trials, seed).map_err(runtime)?;
    let bytes = match format {
        Format::Json => json_bytes(&report),
        _ => csv_bytes(
            fusion_cmd::EventRow::HEADER,
            report.events.iter().map(fusion_cmd::EventRow::record),
        ),
    }
    .map_err(runtime)?;
    emit(out, &bytes).map_err(runtime)?;
    if let Some(path) = records {
        scenario.write_records(path, trials, seed).map_err(usage)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate {
            config,
            out,
            format,
        } => generate(&config, out.as_deref(), format),
        Command::Sweep {
            config,
            out,
            format,
            closed_form_only,
            trials,
            seed,
        } => run_sweep(
            &config,
            out.as_deref(),
            format,
            closed_form_only,
            trials,
            seed,
        ),
        Command::Fusion {
            config,
            out,
            format,
            trials,
            seed,
            records,
        } => run_fusion(
            &config,
            out.as_deref(),
            format,
            trials,
            seed,
            records.as_deref(),
        ),
        Command::BoostScan {
            eta,
            m_max,
            trials,
            seed,
            out,
            format,
        } => {
            only_tabular(format, "boost-scan")?;
            let grid = BoostGrid {
                eta,
                m: (1..=m_max).collect(),
            };
            grid.validate().map_err(usage)?;
            let rows = sweep::boost_scan(&grid, trials, seed).map_err(runtime)?;
            write_boost(&rows, out.as_deref(), format)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("RSS_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) => eprintln!("error: {e:#}"),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::SelfCheck(msg) => eprintln!("self-check failed: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
