//! TOML run descriptions.
//!
//! ```toml
//! [protocol]
//! blocks = [[1, 2], [1]]        # or: vertices = 2, qubits = 3
//! step5b_mode = "alternating"   # or "consistent"
//! initial_sign = "plus"         # or "minus"
//!
//! [errors]
//! spin_init_fidelity = 0.99
//! step3 = { dy = 0.1 }          # broadcast to every sub-vertex
//! "step3[1,2]" = { dy = 0.2, dz = 0.05 }
//! cyclicity = 0.98
//! "cyclicity[2,1,late]" = 0.9
//! loss = 0.05
//! ```
//!
//! Scalars broadcast to every index; quoted `name[i,j]` keys override one
//! index.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rss_core::{ErrorModel, InitialSign, ProtocolConfig, RotationError, Step5bMode, TimeBin};
use toml::{Table, Value};

pub fn read_table(path: &Path) -> Result<Table> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse::<Table>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn section<'a>(table: &'a Table, name: &str) -> Result<Option<&'a Table>> {
    match table.get(name) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => bail!("[{name}] must be a table"),
    }
}

pub fn float(value: &Value, what: &str) -> Result<f64> {
    match value {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => bail!("{what}: expected a number"),
    }
}

fn uint(value: &Value, what: &str) -> Result<usize> {
    match value {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => bail!("{what}: expected a non-negative integer"),
    }
}

fn string<'a>(value: &'a Value, what: &str) -> Result<&'a str> {
    value
        .as_str()
        .ok_or_else(|| anyhow!("{what}: expected a string"))
}

pub fn parse_mode(s: &str) -> Result<Step5bMode> {
    match s {
        "alternating" => Ok(Step5bMode::Alternating),
        "consistent" => Ok(Step5bMode::Consistent),
        _ => bail!("step5b_mode must be \"alternating\" or \"consistent\", got {s:?}"),
    }
}

pub fn parse_sign(s: &str) -> Result<InitialSign> {
    match s {
        "plus" | "+" => Ok(InitialSign::Plus),
        "minus" | "-" => Ok(InitialSign::Minus),
        _ => bail!("initial_sign must be \"plus\" or \"minus\", got {s:?}"),
    }
}

/// Closing mode and sign from `[protocol]`, with their defaults.
pub fn mode_and_sign(protocol: Option<&Table>) -> Result<(Step5bMode, InitialSign)> {
    let mode = match protocol.and_then(|p| p.get("step5b_mode")) {
        Some(v) => parse_mode(string(v, "step5b_mode")?)?,
        None => Step5bMode::Alternating,
    };
    let sign = match protocol.and_then(|p| p.get("initial_sign")) {
        Some(v) => parse_sign(string(v, "initial_sign")?)?,
        None => InitialSign::Plus,
    };
    Ok((mode, sign))
}

pub fn protocol_config(protocol: Option<&Table>) -> Result<ProtocolConfig> {
    let (mode, sign) = mode_and_sign(protocol)?;
    let empty = Table::new();
    let p = protocol.unwrap_or(&empty);
    for key in p.keys() {
        if !matches!(
            key.as_str(),
            "blocks" | "vertices" | "qubits" | "step5b_mode" | "initial_sign"
        ) {
            bail!("[protocol]: unknown key {key:?}");
        }
    }
    let config = if let Some(blocks) = p.get("blocks") {
        if p.contains_key("vertices") || p.contains_key("qubits") {
            bail!("[protocol]: give either blocks or vertices/qubits");
        }
        let blocks = blocks
            .as_array()
            .ok_or_else(|| anyhow!("blocks: expected an array of arrays"))?
            .iter()
            .map(|vertex| {
                vertex
                    .as_array()
                    .ok_or_else(|| anyhow!("blocks: expected an array of arrays"))?
                    .iter()
                    .map(|b| uint(b, "blocks"))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        ProtocolConfig::new(blocks, mode, sign)?
    } else {
        let n = p
            .get("vertices")
            .map(|v| uint(v, "vertices"))
            .transpose()?
            .unwrap_or(1);
        let m = p
            .get("qubits")
            .map(|v| uint(v, "qubits"))
            .transpose()?
            .unwrap_or(1);
        ProtocolConfig::uniform(n, m, mode, sign)?
    };
    Ok(config)
}

fn rotation(value: &Value, what: &str) -> Result<RotationError> {
    match value {
        Value::Table(t) => {
            for key in t.keys() {
                if key != "dy" && key != "dz" {
                    bail!("{what}: unknown key {key:?}, expected dy/dz");
                }
            }
            let get = |k: &str| {
                t.get(k)
                    .map(|v| float(v, what))
                    .transpose()
                    .map(|x| x.unwrap_or(0.0))
            };
            Ok(RotationError::new(get("dy")?, get("dz")?))
        }
        Value::Array(a) if a.len() == 2 => {
            Ok(RotationError::new(float(&a[0], what)?, float(&a[1], what)?))
        }
        _ => bail!("{what}: expected {{ dy = .., dz = .. }} or [dy, dz]"),
    }
}

/// Splits `name[1,2,late]` into `("name", ["1", "2", "late"])`.
fn split_key(key: &str) -> Result<(&str, Vec<&str>)> {
    match key.find('[') {
        None => Ok((key, Vec::new())),
        Some(open) => {
            let inner = key[open + 1..]
                .strip_suffix(']')
                .ok_or_else(|| anyhow!("malformed index in {key:?}"))?;
            Ok((&key[..open], inner.split(',').map(str::trim).collect()))
        }
    }
}

fn index(parts: &[&str], count: usize, key: &str) -> Result<Vec<usize>> {
    if parts.len() != count {
        bail!("{key:?}: expected {count} indices");
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<usize>()
                .with_context(|| format!("{key:?}: bad index {p:?}"))
        })
        .collect()
}

fn bin(s: &str, key: &str) -> Result<TimeBin> {
    match s {
        "early" => Ok(TimeBin::Early),
        "late" => Ok(TimeBin::Late),
        _ => bail!("{key:?}: time bin must be early or late"),
    }
}

/// Builds an error model from an `[errors]` table and checks it against
/// `config`.
pub fn error_model(errors: Option<&Table>, config: &ProtocolConfig) -> Result<ErrorModel> {
    let mut e = ErrorModel::ideal();
    let Some(table) = errors else { return Ok(e) };
    // Broadcast values first so indexed overrides win regardless of order.
    let mut keys: Vec<&String> = table.keys().collect();
    keys.sort_by_key(|k| k.contains('['));
    for key in keys {
        let value = &table[key.as_str()];
        let (name, parts) = split_key(key)?;
        match (name, parts.len()) {
            ("spin_init_fidelity", 0) => e.spin_init_fidelity = float(value, key)?,
            ("step1b", 0) => e.step1b = rotation(value, key)?,
            ("step3", 0) => e.step3.default = rotation(value, key)?,
            ("step3", _) => {
                let i = index(&parts, 2, key)?;
                e.step3.set((i[0], i[1]), rotation(value, key)?);
            }
            ("step5a", 0) => e.step5a.default = rotation(value, key)?,
            ("step5a", _) => {
                let i = index(&parts, 2, key)?;
                e.step5a.set((i[0], i[1]), rotation(value, key)?);
            }
            ("step5b", 0) => e.step5b.default = rotation(value, key)?,
            ("step5b", _) => {
                let i = index(&parts, 1, key)?;
                e.step5b.set(i[0], rotation(value, key)?);
            }
            ("excitation" | "off_resonant" | "cyclicity", _) => {
                let p = float(value, key)?;
                let map = match name {
                    "excitation" => &mut e.excitation,
                    "off_resonant" => &mut e.off_resonant,
                    _ => &mut e.cyclicity,
                };
                match parts.len() {
                    0 => map.default = p,
                    2 => {
                        let i = index(&parts, 2, key)?;
                        for b in [TimeBin::Early, TimeBin::Late] {
                            map.set((i[0], i[1], b), p);
                        }
                    }
                    3 => {
                        let i = index(&parts[..2], 2, key)?;
                        map.set((i[0], i[1], bin(parts[2], key)?), p);
                    }
                    _ => bail!("{key:?}: expected 0, 2 or 3 indices"),
                }
            }
            ("loss" | "loss_early" | "loss_late", _) => {
                let p = float(value, key)?;
                let early = name != "loss_late";
                let late = name != "loss_early";
                let i = if parts.is_empty() {
                    None
                } else {
                    Some(index(&parts, 2, key)?)
                };
                for (on, map) in [(early, &mut e.loss_early), (late, &mut e.loss_late)] {
                    if !on {
                        continue;
                    }
                    match &i {
                        None => map.default = p,
                        Some(i) => {
                            map.set((i[0], i[1]), p);
                        }
                    }
                }
            }
            _ => bail!("[errors]: unknown key {key:?}"),
        }
    }
    e.validate(config)?;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Table {
        text.parse().unwrap()
    }

    #[test]
    fn uniform_and_block_protocols() {
        let t = parse("[protocol]\nvertices = 2\nqubits = 3\nstep5b_mode = \"consistent\"");
        let c = protocol_config(section(&t, "protocol").unwrap()).unwrap();
        assert_eq!(c.qubits_per_vertex(), vec![3, 3]);
        let t = parse("[protocol]\nblocks = [[1, 2], [1]]");
        let c = protocol_config(section(&t, "protocol").unwrap()).unwrap();
        assert_eq!(c.all_blocks(), &[vec![1, 2], vec![1]]);
    }

    #[test]
    fn overrides_beat_broadcasts() {
        let c = ProtocolConfig::uniform(2, 2, Step5bMode::Alternating, InitialSign::Plus).unwrap();
        let t = parse("\"cyclicity[2,1,late]\" = 0.5\ncyclicity = 0.9\n\"step3[1,1]\" = { dz = 0.3 }\nloss_late = 0.1");
        let e = error_model(Some(&t), &c).unwrap();
        assert_eq!(e.cyclicity.get((2, 1, TimeBin::Late)), 0.5);
        assert_eq!(e.cyclicity.get((2, 1, TimeBin::Early)), 0.9);
        assert_eq!(e.step3.get((1, 1)), RotationError::new(0.0, 0.3));
        assert_eq!(e.loss_late.default, 0.1);
        assert_eq!(e.loss_early.default, 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        let c = ProtocolConfig::uniform(1, 1, Step5bMode::Alternating, InitialSign::Plus).unwrap();
        assert!(error_model(Some(&parse("loss = 1.5")), &c).is_err());
        assert!(error_model(Some(&parse("\"loss[2,1]\" = 0.1")), &c).is_err());
        assert!(error_model(Some(&parse("bogus = 1")), &c).is_err());
        assert!(error_model(Some(&parse("\"step3[1]\" = [0.1, 0.0]")), &c).is_err());
    }
}
