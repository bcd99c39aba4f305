//! File formats shared with the command-line tool.
//!
//! Complex matrices are row-major nested arrays of `[re, im]` pairs. Floats
//! are written in shortest round-trip form, so save/load is bit exact.

use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baseline::relay_powers;
use crate::channel::{ChannelRealization, SystemConfig, Terminal};
use crate::design::{AllocationSummary, DesignSolution};
use crate::error::{Error, Result};
use crate::harness::{Algorithm, BerCurve, SimulationConfig};
use crate::linalg::{energy, CMat, C64};

/// Serde adapter for a single complex matrix.
pub mod cmat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Serde adapter for a list of complex matrices.
pub mod cmat_list {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[CMat], s: S) -> std::result::Result<S::Ok, S::Error> {
        ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<CMat>, D::Error> {
        let list = Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?;
        list.iter()
            .enumerate()
            .map(|(k, rows)| from_rows(rows).map_err(|e| D::Error::custom(format!("matrix {k}: {e}"))))
            .collect()
    }
}

pub fn to_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> std::result::Result<CMat, String> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, |r| r.len());
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_cols) {
        return Err(format!("row {i} has {} entries, expected {n_cols}", r.len()));
    }
    for (i, row) in rows.iter().enumerate() {
        if let Some(j) = row.iter().position(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(format!("entry ({i}, {j}) is not finite"));
        }
    }
    Ok(CMat::from_fn(n_rows, n_cols, |r, c| C64::new(rows[r][c][0], rows[r][c][1])))
}

fn json_error(e: serde_json::Error, what: &str) -> Error {
    Error::Parse {
        location: format!("{what} line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    }
}

/// Channel file: `h1`, `h2` (`n_c n_r x n_t`), `g1`, `g2` (`n_t x n_c n_r`) and `n_r`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDocument {
    pub n_r: usize,
    #[serde(with = "cmat")]
    pub h1: CMat,
    #[serde(with = "cmat")]
    pub h2: CMat,
    #[serde(with = "cmat")]
    pub g1: CMat,
    #[serde(with = "cmat")]
    pub g2: CMat,
}

impl From<&ChannelRealization> for ChannelDocument {
    fn from(ch: &ChannelRealization) -> Self {
        ChannelDocument {
            n_r: ch.n_r,
            h1: ch.h1.clone(),
            h2: ch.h2.clone(),
            g1: ch.g1.clone(),
            g2: ch.g2.clone(),
        }
    }
}

pub fn channel_to_json(ch: &ChannelRealization) -> String {
    serde_json::to_string_pretty(&ChannelDocument::from(ch)).expect("channel serializes")
}

pub fn channel_from_json(text: &str) -> Result<ChannelRealization> {
    let doc: ChannelDocument = serde_json::from_str(text).map_err(|e| json_error(e, "channel file"))?;
    ChannelRealization::new(doc.h1, doc.h2, doc.g1, doc.g2, doc.n_r).map_err(|e| Error::Parse {
        location: "channel file".into(),
        message: e.to_string(),
    })
}

pub fn load_channel(path: &Path) -> Result<ChannelRealization> {
    let text = std::fs::read_to_string(path)?;
    channel_from_json(&text)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub trace_p1: f64,
    pub trace_p2: f64,
    pub trace_b1: Option<f64>,
    pub trace_b2: Option<f64>,
    /// Average transmit power of each relay.
    pub relay_powers: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosedFormDocument {
    #[serde(with = "cmat")]
    pub b1: CMat,
    #[serde(with = "cmat")]
    pub b2: CMat,
    #[serde(with = "cmat")]
    pub q1: CMat,
    #[serde(with = "cmat")]
    pub q2: CMat,
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    pub delta1: Vec<f64>,
    pub delta2: Vec<f64>,
    /// Allocation of the link leaving terminal 1.
    pub allocation1: AllocationSummary,
    pub allocation2: AllocationSummary,
}

/// Design output with the effective configuration and channel source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignDocument {
    pub version: String,
    pub config: SystemConfig,
    pub seed: Option<u64>,
    pub channel_file: Option<String>,
    #[serde(with = "cmat")]
    pub p1: CMat,
    #[serde(with = "cmat")]
    pub p2: CMat,
    #[serde(with = "cmat_list")]
    pub relays: Vec<CMat>,
    #[serde(with = "cmat")]
    pub d1: CMat,
    #[serde(with = "cmat")]
    pub d2: CMat,
    pub closed_form: Option<ClosedFormDocument>,
    pub constraints: ConstraintReport,
}

impl DesignDocument {
    pub fn new(
        sol: &DesignSolution,
        ch: &ChannelRealization,
        cfg: &SystemConfig,
        seed: Option<u64>,
        channel_file: Option<String>,
    ) -> Self {
        let cf = sol.closed_form.as_ref();
        DesignDocument {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            seed,
            channel_file,
            p1: sol.p1.clone(),
            p2: sol.p2.clone(),
            relays: sol.relays.clone(),
            d1: sol.d1.clone(),
            d2: sol.d2.clone(),
            closed_form: cf.map(|c| ClosedFormDocument {
                b1: c.b1.clone(),
                b2: c.b2.clone(),
                q1: c.q1.clone(),
                q2: c.q2.clone(),
                omega1: c.omega1.clone(),
                omega2: c.omega2.clone(),
                delta1: c.delta1.clone(),
                delta2: c.delta2.clone(),
                allocation1: (&c.alloc1).into(),
                allocation2: (&c.alloc2).into(),
            }),
            constraints: ConstraintReport {
                trace_p1: energy(sol.p(Terminal::One)),
                trace_p2: energy(sol.p(Terminal::Two)),
                trace_b1: cf.map(|c| energy(&c.b1)),
                trace_b2: cf.map(|c| energy(&c.b2)),
                relay_powers: relay_powers(ch, cfg, sol),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("design serializes")
    }
}

/// `start:step:stop` (inclusive) or a single value, in dB.
pub fn parse_ebn0_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |m: &str| Error::Parse {
        location: format!("Eb/N0 grid '{spec}'"),
        message: m.to_string(),
    };
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(&format!("'{s}' is not a number")));
    match parts.as_slice() {
        [single] => Ok(vec![num(single)?]),
        [a, b, c] => {
            let (start, step, stop) = (num(a)?, num(b)?, num(c)?);
            if !(step > 0.0) {
                return Err(bad("step must be positive"));
            }
            if stop < start {
                return Err(bad("stop is below start"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if count > 10_000 {
                return Err(bad("grid has more than 10000 points"));
            }
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(bad("expected START:STEP:STOP or a single value")),
    }
}

pub fn parse_algorithms(list: &str) -> Result<Vec<Algorithm>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(Error::InvalidConfig("empty algorithm list".into()))
            } else {
                Ok(v)
            }
        })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// TOML configuration file. Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n_t: Option<usize>,
    pub n_r: Option<usize>,
    pub n_c: Option<OneOrMany<usize>>,
    pub n_s: Option<usize>,
    pub sigma2_w: Option<f64>,
    pub sigma2_n1: Option<f64>,
    pub sigma2_n2: Option<f64>,
    pub p_t1: Option<f64>,
    pub p_t2: Option<f64>,
    pub p_r_tilde1: Option<f64>,
    pub p_r_tilde2: Option<f64>,
    pub ebn0: Option<String>,
    pub trials: Option<usize>,
    pub symbols: Option<usize>,
    pub seed: Option<u64>,
    pub algo: Option<OneOrMany<String>>,
    pub channel: Option<String>,
}

pub fn parse_config(text: &str, origin: &str) -> Result<ConfigFile> {
    toml::from_str(text).map_err(|e| {
        let location = match e.span() {
            Some(span) => {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                format!("{origin} line {line}")
            }
            None => origin.to_string(),
        };
        Error::Parse {
            location,
            message: e.message().to_string(),
        }
    })
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, &path.display().to_string())
}

#[derive(Serialize)]
struct CsvRow<'a> {
    algorithm: &'a str,
    n_c: usize,
    ebn0_db: f64,
    bits: u64,
    bit_errors: u64,
    ber: f64,
    ci_low: f64,
    ci_high: f64,
}

/// CSV with a `#` comment preamble carrying version, seed and the effective configs.
pub fn curves_to_csv(curves: &[BerCurve], configs: &[SimulationConfig]) -> Result<String> {
    let mut out = String::new();
    out.push_str(&format!("# twr {}\n", env!("CARGO_PKG_VERSION")));
    for cfg in configs {
        out.push_str(&format!(
            "# config {} {}\n",
            cfg.config_hash(),
            serde_json::to_string(cfg)?
        ));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for curve in curves {
        let label = curve.algorithm.to_string();
        for p in &curve.points {
            w.serialize(CsvRow {
                algorithm: &label,
                n_c: curve.n_c,
                ebn0_db: p.ebn0_db,
                bits: p.bits,
                bit_errors: p.bit_errors,
                ber: p.ber,
                ci_low: p.ci_low,
                ci_high: p.ci_high,
            })
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
    }
    let body = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepDocument {
    pub version: String,
    pub configs: Vec<SimulationConfig>,
    pub curves: Vec<BerCurve>,
}

pub fn curves_to_json(curves: &[BerCurve], configs: &[SimulationConfig]) -> String {
    let doc = SweepDocument {
        version: env!("CARGO_PKG_VERSION").to_string(),
        configs: configs.to_vec(),
        curves: curves.to_vec(),
    };
    serde_json::to_string_pretty(&doc).expect("results serialize")
}
