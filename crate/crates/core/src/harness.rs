//! Seeded Monte Carlo BER sweeps.
//!
//! Every trial derives its random streams from `(master_seed, trial)` only, so
//! all algorithms and all grid points see the same channels, symbols and noise
//! realizations, and results do not depend on how trials are scheduled.

use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{baseline_design, equalize_relay_power, BaselineConfig};
use crate::channel::{
    draw_channels_split, draw_noise, draw_symbols, count_bit_errors, ChannelRealization, Substream,
    SystemConfig, Terminal, TrialSeed,
};
use crate::design::{design, DesignSolution};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::system::{cancel_self_interference, relay_receive, terminal_receive, DualHopMatrices};

pub const MAX_REDRAWS: usize = 100;
pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_SYMBOLS: usize = 10_000;
/// Default Eb/N0 grid in `start:step:stop` form (dB).
pub const DEFAULT_EBN0_GRID: &str = "0:2:12";
const CHUNK_COLUMNS: usize = 2048;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Proposed,
    Baseline { iterations: usize },
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Proposed => write!(f, "proposed"),
            Algorithm::Baseline { iterations } => write!(f, "baseline:{iterations}"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "proposed" {
            return Ok(Algorithm::Proposed);
        }
        if let Some(rest) = s.strip_prefix("baseline") {
            let iterations = match rest.strip_prefix(':') {
                Some(n) => n
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("bad baseline iteration count in '{s}'")))?,
                None if rest.is_empty() => 10,
                None => return Err(Error::InvalidConfig(format!("unknown algorithm '{s}'"))),
            };
            if iterations == 0 {
                return Err(Error::InvalidConfig("baseline needs at least one iteration".into()));
            }
            return Ok(Algorithm::Baseline { iterations });
        }
        Err(Error::InvalidConfig(format!(
            "unknown algorithm '{s}' (expected 'proposed' or 'baseline:N')"
        )))
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What the relays do during a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelayMode {
    #[default]
    Designed,
    /// All relay matrices forced to zero; nothing reaches the far terminal.
    Silent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub base: SystemConfig,
    pub ebn0_grid_db: Vec<f64>,
    pub trials: usize,
    pub symbols_per_trial: usize,
    pub master_seed: u64,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub relay_mode: RelayMode,
}

impl SimulationConfig {
    pub fn new(base: SystemConfig, ebn0_grid_db: Vec<f64>, algorithms: Vec<Algorithm>) -> Self {
        SimulationConfig {
            base,
            ebn0_grid_db,
            trials: DEFAULT_TRIALS,
            symbols_per_trial: DEFAULT_SYMBOLS,
            master_seed: 1,
            algorithms,
            relay_mode: RelayMode::Designed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.symbols_per_trial == 0 || self.symbols_per_trial % self.base.n_s != 0 {
            return Err(Error::InvalidConfig(format!(
                "symbols per trial ({}) must be a positive multiple of N_s = {}",
                self.symbols_per_trial, self.base.n_s
            )));
        }
        if self.ebn0_grid_db.is_empty() || self.ebn0_grid_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("Eb/N0 grid must be a non-empty list of finite values".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidConfig("no algorithm selected".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Powers used at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSettings {
    pub p_t1: f64,
    pub p_t2: f64,
    pub p_relay: f64,
    pub p_r_tilde: f64,
}

impl PowerSettings {
    pub fn apply(&self, base: &SystemConfig) -> SystemConfig {
        SystemConfig {
            p_t1: self.p_t1,
            p_t2: self.p_t2,
            p_r_tilde1: self.p_r_tilde,
            p_r_tilde2: self.p_r_tilde,
            ..base.clone()
        }
    }
}

/// `P = N_s log2(4) 10^(ebn0/10)` for both terminals and every relay; the
/// design-stage relay bound is `N_C P`.
pub fn map_ebn0_to_powers(ebn0_db: f64, cfg: &SystemConfig) -> PowerSettings {
    let bits_per_use = cfg.n_s as f64 * 2.0;
    let p = bits_per_use * 10f64.powf(ebn0_db / 10.0);
    PowerSettings {
        p_t1: p,
        p_t2: p,
        p_relay: p,
        p_r_tilde: cfg.n_c as f64 * p,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrialOutcome {
    pub bit_errors: u64,
    pub bits: u64,
    pub redraws: u64,
}

impl std::ops::Add for TrialOutcome {
    type Output = TrialOutcome;
    fn add(self, o: TrialOutcome) -> TrialOutcome {
        TrialOutcome {
            bit_errors: self.bit_errors + o.bit_errors,
            bits: self.bits + o.bits,
            redraws: self.redraws + o.redraws,
        }
    }
}

/// Draws a channel on which the closed-form design is defined, redrawing up to [`MAX_REDRAWS`] times.
pub fn draw_usable_channel(cfg: &SystemConfig, seed: TrialSeed) -> Result<(ChannelRealization, DesignSolution, u64)> {
    let mut first = seed.stream(Substream::FirstHop);
    let mut second = seed.stream(Substream::SecondHop);
    let mut redraws = 0u64;
    loop {
        let ch = draw_channels_split(cfg, &mut first, &mut second);
        match design(&ch, cfg) {
            Ok(sol) => return Ok((ch, sol, redraws)),
            Err(Error::DegenerateChannel(msg)) => {
                redraws += 1;
                warn!("trial {}: degenerate channel redrawn ({msg})", seed.trial);
                if redraws as usize >= MAX_REDRAWS {
                    return Err(Error::DegenerateChannel(format!(
                        "trial {}: {MAX_REDRAWS} consecutive degenerate channel draws; last: {msg}",
                        seed.trial
                    )));
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Builds the transceivers `algo` uses on channel `ch`, with every relay scaled to `p_relay`.
pub fn build_transceivers(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    algo: Algorithm,
    p_relay: f64,
    proposed: DesignSolution,
    seed: TrialSeed,
) -> Result<DesignSolution> {
    let mut sol = match algo {
        Algorithm::Proposed => proposed,
        Algorithm::Baseline { iterations } => {
            let bcfg = BaselineConfig::new(iterations, p_relay);
            let mut rng = seed.stream(Substream::BaselineInit);
            let out = baseline_design(ch, cfg, &bcfg, &mut rng)?;
            if out.diverged {
                warn!("trial {}: baseline inner solver diverged; using last feasible iterate", seed.trial);
            }
            out.solution
        }
    };
    equalize_relay_power(&mut sol, ch, cfg, p_relay)?;
    Ok(sol)
}

/// Sends `symbols_per_trial` QPSK symbols each way and counts bit errors at both terminals.
pub fn transmit(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    sol: &DesignSolution,
    symbols_per_trial: usize,
    seed: TrialSeed,
) -> Result<TrialOutcome> {
    let n_s = cfg.n_s;
    let columns = symbols_per_trial / n_s;
    let hops = DualHopMatrices::new(ch, &sol.relays, &sol.p1, &sol.p2);
    let mut sym = [seed.stream(Substream::Symbols1), seed.stream(Substream::Symbols2)];
    let mut term_noise = [
        seed.stream(Substream::TerminalNoise1),
        seed.stream(Substream::TerminalNoise2),
    ];
    let mut relay_noise = seed.stream(Substream::RelayNoise);
    let mut outcome = TrialOutcome::default();
    let mut done = 0;
    while done < columns {
        let cols = CHUNK_COLUMNS.min(columns - done);
        let s1 = draw_symbols(n_s, cols, &mut sym[0])?;
        let s2 = draw_symbols(n_s, cols, &mut sym[1])?;
        let w = draw_noise(cfg.relay_dim(), cols, cfg.sigma2_w, &mut relay_noise)?;
        let y = relay_receive(ch, &sol.p1, &sol.p2, &s1.symbols, &s2.symbols, &w)?;
        for t in Terminal::BOTH {
            let n = draw_noise(cfg.n_t, cols, cfg.sigma2_n(t), &mut term_noise[t.index()])?;
            let r = terminal_receive(ch, &sol.relays, &y, &n, t)?;
            let (own, far) = match t {
                Terminal::One => (&s1, &s2),
                Terminal::Two => (&s2, &s1),
            };
            let clean = cancel_self_interference(&r, hops.get(t, t), &own.symbols)?;
            let estimates: CMat = sol.d(t) * clean;
            outcome.bit_errors += count_bit_errors(far, &estimates);
            outcome.bits += 2 * (n_s * cols) as u64;
        }
        done += cols;
    }
    Ok(outcome)
}

/// One Monte Carlo trial at one grid point.
pub fn run_trial(
    base: &SystemConfig,
    ebn0_db: f64,
    algo: Algorithm,
    trial_index: u64,
    master_seed: u64,
    symbols_per_trial: usize,
    relay_mode: RelayMode,
) -> Result<TrialOutcome> {
    let powers = map_ebn0_to_powers(ebn0_db, base);
    let cfg = powers.apply(base);
    let seed = TrialSeed::new(master_seed, trial_index);
    let (ch, proposed, redraws) = draw_usable_channel(&cfg, seed)?;
    let sol = match relay_mode {
        RelayMode::Designed => build_transceivers(&ch, &cfg, algo, powers.p_relay, proposed, seed)?,
        RelayMode::Silent => {
            let mut sol = proposed;
            for f in sol.relays.iter_mut() {
                f.fill(num_complex::Complex64::new(0.0, 0.0));
            }
            sol.refresh_decoders(&ch, &cfg)?;
            sol
        }
    };
    let mut out = transmit(&ch, &cfg, &sol, symbols_per_trial, seed)?;
    out.redraws = redraws;
    Ok(out)
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(errors: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if errors as f64 == n { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub ebn0_db: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub degenerate_redraws: u64,
}

impl BerPoint {
    pub fn from_counts(ebn0_db: f64, outcome: TrialOutcome) -> Self {
        let (ci_low, ci_high) = wilson_interval(outcome.bit_errors, outcome.bits);
        BerPoint {
            ebn0_db,
            bit_errors: outcome.bit_errors,
            bits: outcome.bits,
            ber: if outcome.bits == 0 {
                0.0
            } else {
                outcome.bit_errors as f64 / outcome.bits as f64
            },
            ci_low,
            ci_high,
            degenerate_redraws: outcome.redraws,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub config_hash: String,
    pub master_seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub algorithm: Algorithm,
    pub n_c: usize,
    pub points: Vec<BerPoint>,
    pub metadata: CurveMetadata,
}

/// Runs every (algorithm, grid point, trial) combination. `threads = None`
/// uses the global pool; `Some(n)` runs on a dedicated pool of `n` workers.
pub fn sweep(sim: &SimulationConfig, threads: Option<usize>) -> Result<Vec<BerCurve>> {
    sim.validate()?;
    let jobs: Vec<(usize, usize, u64)> = (0..sim.algorithms.len())
        .flat_map(|a| {
            (0..sim.ebn0_grid_db.len()).flat_map(move |g| (0..sim.trials as u64).map(move |t| (a, g, t)))
        })
        .collect();
    let run = || -> Result<Vec<TrialOutcome>> {
        jobs.par_iter()
            .map(|&(a, g, t)| {
                run_trial(
                    &sim.base,
                    sim.ebn0_grid_db[g],
                    sim.algorithms[a],
                    t,
                    sim.master_seed,
                    sim.symbols_per_trial,
                    sim.relay_mode,
                )
            })
            .collect()
    };
    let outcomes = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };

    let metadata = CurveMetadata {
        config_hash: sim.config_hash(),
        master_seed: sim.master_seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let per_point = sim.trials;
    let mut curves = Vec::with_capacity(sim.algorithms.len());
    for (a, &algo) in sim.algorithms.iter().enumerate() {
        let points = sim
            .ebn0_grid_db
            .iter()
            .enumerate()
            .map(|(g, &ebn0)| {
                let start = (a * sim.ebn0_grid_db.len() + g) * per_point;
                let total = outcomes[start..start + per_point]
                    .iter()
                    .fold(TrialOutcome::default(), |acc, &o| acc + o);
                let point = BerPoint::from_counts(ebn0, total);
                info!(
                    "{algo} N_C={} Eb/N0={ebn0} dB: BER {:.3e} ({} / {} bits)",
                    sim.base.n_c, point.ber, point.bit_errors, point.bits
                );
                point
            })
            .collect();
        curves.push(BerCurve {
            algorithm: algo,
            n_c: sim.base.n_c,
            points,
            metadata: metadata.clone(),
        });
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(n_c: usize) -> SystemConfig {
        SystemConfig {
            n_c,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn power_mapping_convention() {
        let p = map_ebn0_to_powers(0.0, &base(2));
        assert_eq!(p.p_t1, 4.0);
        assert_eq!(p.p_relay, 4.0);
        assert_eq!(p.p_r_tilde, 8.0);
        let q = map_ebn0_to_powers(10.0 * 2f64.log10(), &base(2));
        assert!((q.p_t1 / p.p_t1 - 2.0).abs() < 1e-12);
        let mut last = 0.0;
        for db in [-5.0, 0.0, 3.0, 11.5, 20.0] {
            let v = map_ebn0_to_powers(db, &base(3)).p_t2;
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn algorithm_labels_round_trip() {
        for a in [Algorithm::Proposed, Algorithm::Baseline { iterations: 10 }, Algorithm::Baseline { iterations: 5 }] {
            assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("baseline".parse::<Algorithm>().unwrap(), Algorithm::Baseline { iterations: 10 });
        assert!("baseline:0".parse::<Algorithm>().is_err());
        assert!("wmmse".parse::<Algorithm>().is_err());
        assert!("baseline:x".parse::<Algorithm>().is_err());
    }

    #[test]
    fn wilson_properties() {
        let (lo, hi) = wilson_interval(0, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
        let (lo, hi) = wilson_interval(500, 1000);
        assert!(lo < 0.5 && hi > 0.5);
        assert!(((0.5 - lo) - (hi - 0.5)).abs() < 1e-12);
        // Doubling the sample at fixed rate shrinks the width by about 1/sqrt(2).
        let w1 = {
            let (l, h) = wilson_interval(1000, 100_000);
            h - l
        };
        let w2 = {
            let (l, h) = wilson_interval(2000, 200_000);
            h - l
        };
        assert!((w2 / w1 - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.01);
    }

    #[test]
    fn noiseless_trial_has_no_errors() {
        let cfg = SystemConfig {
            sigma2_w: 1e-12,
            sigma2_n1: 1e-12,
            sigma2_n2: 1e-12,
            ..base(2)
        };
        for algo in [Algorithm::Proposed, Algorithm::Baseline { iterations: 3 }] {
            let out = run_trial(&cfg, 10.0, algo, 0, 5, 2000, RelayMode::Designed).unwrap();
            assert_eq!(out.bits, 2 * 2 * 2000);
            assert_eq!(out.bit_errors, 0, "{algo}");
        }
    }

    #[test]
    fn silent_relays_give_coin_flips() {
        let mut sim = SimulationConfig::new(base(2), vec![10.0], vec![Algorithm::Proposed]);
        sim.trials = 20;
        sim.symbols_per_trial = 5000;
        sim.relay_mode = RelayMode::Silent;
        let curve = &sweep(&sim, Some(2)).unwrap()[0];
        let p = &curve.points[0];
        assert!(p.ci_low < 0.5 && p.ci_high > 0.5, "{p:?}");
        assert!((p.ber - 0.5).abs() < 0.01);
    }

    #[test]
    fn sweep_is_independent_of_thread_count() {
        let mut sim = SimulationConfig::new(
            base(2),
            vec![0.0, 6.0],
            vec![Algorithm::Proposed, Algorithm::Baseline { iterations: 2 }],
        );
        sim.trials = 6;
        sim.symbols_per_trial = 400;
        let a = sweep(&sim, Some(1)).unwrap();
        let b = sweep(&sim, Some(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].points.len(), 2);
        assert!(a[0].points[0].bit_errors > 0);
    }

    #[test]
    fn single_trial_matches_run_trial() {
        let mut sim = SimulationConfig::new(base(2), vec![4.0], vec![Algorithm::Proposed]);
        sim.trials = 1;
        sim.symbols_per_trial = 1000;
        sim.master_seed = 77;
        let curve = &sweep(&sim, None).unwrap()[0];
        let direct = run_trial(&sim.base, 4.0, Algorithm::Proposed, 0, 77, 1000, RelayMode::Designed).unwrap();
        assert_eq!(curve.points[0].bit_errors, direct.bit_errors);
        assert_eq!(curve.points[0].bits, direct.bits);
    }

    #[test]
    fn validation_rejects_bad_settings() {
        let mut sim = SimulationConfig::new(base(2), vec![0.0], vec![Algorithm::Proposed]);
        sim.symbols_per_trial = 3;
        assert!(sim.validate().is_err());
        sim.symbols_per_trial = 4;
        sim.trials = 0;
        assert!(sim.validate().is_err());
        sim.trials = 1;
        sim.ebn0_grid_db.clear();
        assert!(sim.validate().is_err());
    }

    #[test]
    fn config_hash_tracks_content() {
        let sim = SimulationConfig::new(base(2), vec![0.0], vec![Algorithm::Proposed]);
        let mut other = sim.clone();
        assert_eq!(sim.config_hash(), other.config_hash());
        other.master_seed = 2;
        assert_ne!(sim.config_hash(), other.config_hash());
        assert_eq!(sim.config_hash().len(), 64);
    }
}
