//! System configuration, Rayleigh channel draws, noise and QPSK symbols.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, CMat, C64};

/// One of the two terminals exchanging data through the relays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terminal {
    One,
    Two,
}

impl Terminal {
    pub const BOTH: [Terminal; 2] = [Terminal::One, Terminal::Two];

    /// The terminal at the other end of the link.
    pub fn other(self) -> Terminal {
        match self {
            Terminal::One => Terminal::Two,
            Terminal::Two => Terminal::One,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Terminal::One => 0,
            Terminal::Two => 1,
        }
    }
}

/// Antenna counts, noise levels and power budgets. Both terminals carry the
/// same number of antennas and streams. Modulation is always QPSK.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Antennas per terminal.
    pub n_t: usize,
    /// Antennas per relay.
    pub n_r: usize,
    /// Number of relays.
    pub n_c: usize,
    /// Streams per terminal.
    pub n_s: usize,
    pub sigma2_w: f64,
    pub sigma2_n1: f64,
    pub sigma2_n2: f64,
    pub p_t1: f64,
    pub p_t2: f64,
    /// Bound on `tr(G_1 F F^H G_1^H)`.
    pub p_r_tilde1: f64,
    /// Bound on `tr(G_2 F F^H G_2^H)`.
    pub p_r_tilde2: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_t: 2,
            n_r: 4,
            n_c: 2,
            n_s: 2,
            sigma2_w: 1.0,
            sigma2_n1: 1.0,
            sigma2_n2: 1.0,
            p_t1: 1.0,
            p_t2: 1.0,
            p_r_tilde1: 1.0,
            p_r_tilde2: 1.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_t == 0 || self.n_r == 0 || self.n_c == 0 || self.n_s == 0 {
            return bad("antenna, relay and stream counts must be at least 1".into());
        }
        if self.n_s > self.n_t {
            return bad(format!("n_s = {} exceeds n_t = {}", self.n_s, self.n_t));
        }
        if 2 * self.n_t > self.n_r {
            return bad(format!(
                "relays need n_r >= 2 n_t for the stacked second-hop channel to be full row rank (n_t = {}, n_r = {})",
                self.n_t, self.n_r
            ));
        }
        let positives = [
            ("sigma2_w", self.sigma2_w),
            ("sigma2_n1", self.sigma2_n1),
            ("sigma2_n2", self.sigma2_n2),
            ("p_t1", self.p_t1),
            ("p_t2", self.p_t2),
            ("p_r_tilde1", self.p_r_tilde1),
            ("p_r_tilde2", self.p_r_tilde2),
        ];
        for (name, v) in positives {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }

    /// Total relay antennas `n_c * n_r`.
    pub fn relay_dim(&self) -> usize {
        self.n_c * self.n_r
    }

    pub fn sigma2_n(&self, t: Terminal) -> f64 {
        match t {
            Terminal::One => self.sigma2_n1,
            Terminal::Two => self.sigma2_n2,
        }
    }

    pub fn p_t(&self, t: Terminal) -> f64 {
        match t {
            Terminal::One => self.p_t1,
            Terminal::Two => self.p_t2,
        }
    }

    pub fn p_r_tilde(&self, t: Terminal) -> f64 {
        match t {
            Terminal::One => self.p_r_tilde1,
            Terminal::Two => self.p_r_tilde2,
        }
    }
}

/// First-hop `H_i` (`n_c n_r x n_t`, per-relay blocks stacked vertically) and
/// second-hop `G_i` (`n_t x n_c n_r`, per-relay blocks side by side).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h1: CMat,
    pub h2: CMat,
    pub g1: CMat,
    pub g2: CMat,
    /// Antennas per relay, i.e. the block size.
    pub n_r: usize,
}

impl ChannelRealization {
    pub fn new(h1: CMat, h2: CMat, g1: CMat, g2: CMat, n_r: usize) -> Result<Self> {
        let ch = ChannelRealization { h1, h2, g1, g2, n_r };
        ch.check_shapes()?;
        Ok(ch)
    }

    fn check_shapes(&self) -> Result<()> {
        let rd = self.h1.nrows();
        let n_t = self.h1.ncols();
        if rd == 0 || n_t == 0 {
            return Err(Error::contract("channel matrices must be non-empty"));
        }
        if self.n_r == 0 || rd % self.n_r != 0 {
            return Err(Error::contract(format!(
                "relay dimension {rd} is not a multiple of n_r = {}",
                self.n_r
            )));
        }
        if self.h2.shape() != (rd, n_t) || self.g1.shape() != (n_t, rd) || self.g2.shape() != (n_t, rd)
        {
            return Err(Error::contract(format!(
                "channel shapes disagree: H1 {:?}, H2 {:?}, G1 {:?}, G2 {:?}",
                self.h1.shape(),
                self.h2.shape(),
                self.g1.shape(),
                self.g2.shape()
            )));
        }
        Ok(())
    }

    /// Errors unless the shapes match `cfg`.
    pub fn check_against(&self, cfg: &SystemConfig) -> Result<()> {
        self.check_shapes()?;
        if self.n_r != cfg.n_r || self.n_t() != cfg.n_t || self.n_c() != cfg.n_c {
            return Err(Error::contract(format!(
                "channel (n_t={}, n_r={}, n_c={}) does not match config (n_t={}, n_r={}, n_c={})",
                self.n_t(),
                self.n_r,
                self.n_c(),
                cfg.n_t,
                cfg.n_r,
                cfg.n_c
            )));
        }
        Ok(())
    }

    pub fn n_t(&self) -> usize {
        self.h1.ncols()
    }

    pub fn n_c(&self) -> usize {
        self.h1.nrows() / self.n_r
    }

    pub fn h(&self, t: Terminal) -> &CMat {
        match t {
            Terminal::One => &self.h1,
            Terminal::Two => &self.h2,
        }
    }

    pub fn g(&self, t: Terminal) -> &CMat {
        match t {
            Terminal::One => &self.g1,
            Terminal::Two => &self.g2,
        }
    }

    /// `H_{t,k}`: first hop from terminal `t` to relay `k` (`n_r x n_t`).
    pub fn h_block(&self, t: Terminal, k: usize) -> CMat {
        self.h(t).rows(k * self.n_r, self.n_r).into_owned()
    }

    /// `G_{t,k}`: second hop from relay `k` to terminal `t` (`n_t x n_r`).
    pub fn g_block(&self, t: Terminal, k: usize) -> CMat {
        self.g(t).columns(k * self.n_r, self.n_r).into_owned()
    }

    /// `[G_{1,k}; G_{2,k}]` (`2 n_t x n_r`).
    pub fn stacked_second_hop(&self, k: usize) -> CMat {
        let g1 = self.g_block(Terminal::One, k);
        let g2 = self.g_block(Terminal::Two, k);
        let n_t = g1.nrows();
        let mut out = CMat::zeros(2 * n_t, self.n_r);
        out.rows_mut(0, n_t).copy_from(&g1);
        out.rows_mut(n_t, n_t).copy_from(&g2);
        out
    }
}

/// Independent random sources. Each gets its own ChaCha stream so that, for
/// example, changing how many symbols are drawn never perturbs the channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    FirstHop,
    SecondHop,
    RelayNoise,
    TerminalNoise1,
    TerminalNoise2,
    Symbols1,
    Symbols2,
    BaselineInit,
}

impl Substream {
    fn id(self) -> u64 {
        match self {
            Substream::FirstHop => 1,
            Substream::SecondHop => 2,
            Substream::RelayNoise => 3,
            Substream::TerminalNoise1 => 4,
            Substream::TerminalNoise2 => 5,
            Substream::Symbols1 => 6,
            Substream::Symbols2 => 7,
            Substream::BaselineInit => 8,
        }
    }

    pub fn terminal_noise(t: Terminal) -> Substream {
        match t {
            Terminal::One => Substream::TerminalNoise1,
            Terminal::Two => Substream::TerminalNoise2,
        }
    }

    pub fn symbols(t: Terminal) -> Substream {
        match t {
            Terminal::One => Substream::Symbols1,
            Terminal::Two => Substream::Symbols2,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Counter-based seeding: the stream for `(master_seed, trial, source)` is a
/// pure function of those three values.
#[derive(Debug, Clone, Copy)]
pub struct TrialSeed {
    pub master_seed: u64,
    pub trial: u64,
}

impl TrialSeed {
    pub fn new(master_seed: u64, trial: u64) -> Self {
        TrialSeed { master_seed, trial }
    }

    pub fn stream(&self, source: Substream) -> ChaCha8Rng {
        let seed = splitmix64(splitmix64(self.master_seed) ^ self.trial);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(source.id());
        rng
    }
}

/// Draws `H_1, H_2, G_1, G_2` with i.i.d. unit-variance ZMCSC entries.
pub fn draw_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelRealization {
    let rd = cfg.relay_dim();
    let h1 = complex_gaussian(rd, cfg.n_t, 1.0, rng);
    let h2 = complex_gaussian(rd, cfg.n_t, 1.0, rng);
    let g1 = complex_gaussian(cfg.n_t, rd, 1.0, rng);
    let g2 = complex_gaussian(cfg.n_t, rd, 1.0, rng);
    ChannelRealization {
        h1,
        h2,
        g1,
        g2,
        n_r: cfg.n_r,
    }
}

/// Draws the first hop from `first` and the second hop from `second`.
pub fn draw_channels_split<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    cfg: &SystemConfig,
    first: &mut R1,
    second: &mut R2,
) -> ChannelRealization {
    let rd = cfg.relay_dim();
    let h1 = complex_gaussian(rd, cfg.n_t, 1.0, first);
    let h2 = complex_gaussian(rd, cfg.n_t, 1.0, first);
    let g1 = complex_gaussian(cfg.n_t, rd, 1.0, second);
    let g2 = complex_gaussian(cfg.n_t, rd, 1.0, second);
    ChannelRealization {
        h1,
        h2,
        g1,
        g2,
        n_r: cfg.n_r,
    }
}

/// `dim x cols` block of ZMCSC noise with per-entry variance `variance`.
pub fn draw_noise<R: Rng + ?Sized>(dim: usize, cols: usize, variance: f64, rng: &mut R) -> Result<CMat> {
    if !(variance >= 0.0) {
        return Err(Error::contract(format!("noise variance must be >= 0, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(CMat::zeros(dim, cols));
    }
    Ok(complex_gaussian(dim, cols, variance, rng))
}

const QPSK_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Gray-mapped QPSK: bit 0 sets the sign of the real part, bit 1 the sign
/// of the imaginary part (`0 -> +`, `1 -> -`).
pub fn qpsk_map(b0: bool, b1: bool) -> C64 {
    let re = if b0 { -QPSK_SCALE } else { QPSK_SCALE };
    let im = if b1 { -QPSK_SCALE } else { QPSK_SCALE };
    C64::new(re, im)
}

/// Minimum-distance decision back to the two Gray bits.
pub fn qpsk_demap(z: C64) -> (bool, bool) {
    (z.re < 0.0, z.im < 0.0)
}

/// QPSK symbols laid out as an `n x cols` matrix together with their bits
/// (two per symbol, column-major order of the symbols).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub symbols: CMat,
    pub bits: Vec<(bool, bool)>,
}

/// Draws `n x cols` i.i.d. uniform QPSK symbols.
pub fn draw_symbols<R: Rng + ?Sized>(n: usize, cols: usize, rng: &mut R) -> Result<SymbolBlock> {
    if n == 0 {
        return Err(Error::contract("symbol vector length must be at least 1"));
    }
    let mut bits = Vec::with_capacity(n * cols);
    let mut symbols = CMat::zeros(n, cols);
    for c in 0..cols {
        for r in 0..n {
            let word: u32 = rng.random();
            let b = ((word & 1) != 0, (word & 2) != 0);
            symbols[(r, c)] = qpsk_map(b.0, b.1);
            bits.push(b);
        }
    }
    Ok(SymbolBlock { symbols, bits })
}

/// Number of bit errors between the transmitted bits and hard decisions on `estimates`.
pub fn count_bit_errors(sent: &SymbolBlock, estimates: &CMat) -> u64 {
    let mut errors = 0u64;
    let n = sent.symbols.nrows();
    for c in 0..sent.symbols.ncols() {
        for r in 0..n {
            let (b0, b1) = sent.bits[c * n + r];
            let (d0, d1) = qpsk_demap(estimates[(r, c)]);
            errors += (b0 != d0) as u64 + (b1 != d1) as u64;
        }
    }
    errors
}
