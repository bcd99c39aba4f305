//! Two-slot signal chain and the sum-MSE expressions.
//!
//! Every signal argument is a matrix whose columns are independent channel
//! uses, so a single vector is just a one-column matrix. Products with the
//! block-diagonal relay matrix `F = diag(F_1, ..., F_Nc)` are always formed
//! blockwise; the dense `F` is only materialized on request.

use crate::channel::{ChannelRealization, SystemConfig, Terminal};
use crate::error::{Error, Result};
use crate::linalg::{hpd_inverse, hpd_solve, CMat, C64};

/// Precoders, per-relay forwarding matrices and decoders.
///
/// `d1` sits at terminal 1 and estimates the symbols of terminal 2, and vice versa.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub p1: CMat,
    pub p2: CMat,
    pub relays: Vec<CMat>,
    pub d1: CMat,
    pub d2: CMat,
}

impl NetworkState {
    pub fn p(&self, t: Terminal) -> &CMat {
        match t {
            Terminal::One => &self.p1,
            Terminal::Two => &self.p2,
        }
    }

    pub fn d(&self, t: Terminal) -> &CMat {
        match t {
            Terminal::One => &self.d1,
            Terminal::Two => &self.d2,
        }
    }
}

/// Dense `diag(F_1, ..., F_Nc)`.
pub fn block_diag(relays: &[CMat]) -> CMat {
    let n: usize = relays.iter().map(|f| f.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for f in relays {
        out.view_mut((off, off), f.shape()).copy_from(f);
        off += f.nrows();
    }
    out
}

/// Extracts the diagonal `n_r x n_r` blocks of a dense relay matrix.
pub fn diag_blocks(f: &CMat, n_r: usize) -> Vec<CMat> {
    (0..f.nrows() / n_r)
        .map(|k| f.view((k * n_r, k * n_r), (n_r, n_r)).into_owned())
        .collect()
}

fn check_relays(ch: &ChannelRealization, relays: &[CMat]) -> Result<()> {
    if relays.len() != ch.n_c() || relays.iter().any(|f| f.shape() != (ch.n_r, ch.n_r)) {
        return Err(Error::contract(format!(
            "expected {} relay matrices of size {}x{}",
            ch.n_c(),
            ch.n_r,
            ch.n_r
        )));
    }
    Ok(())
}

/// `G_i F` formed blockwise (`n_t x n_c n_r`).
pub fn effective_second_hop(ch: &ChannelRealization, relays: &[CMat], t: Terminal) -> CMat {
    let n_r = ch.n_r;
    let mut out = CMat::zeros(ch.n_t(), ch.n_c() * n_r);
    for (k, f) in relays.iter().enumerate() {
        let gk = ch.g(t).columns(k * n_r, n_r);
        out.columns_mut(k * n_r, n_r).copy_from(&(gk * f));
    }
    out
}

/// `C_{i,j} = G_i F H_j P_j`.
pub fn dual_hop(ch: &ChannelRealization, relays: &[CMat], p_j: &CMat, i: Terminal, j: Terminal) -> CMat {
    let n_r = ch.n_r;
    let hp = ch.h(j) * p_j;
    let mut out = CMat::zeros(ch.n_t(), p_j.ncols());
    for (k, f) in relays.iter().enumerate() {
        let gk = ch.g(i).columns(k * n_r, n_r);
        out += gk * (f * hp.rows(k * n_r, n_r));
    }
    out
}

/// All four dual-hop matrices `[[C11, C12], [C21, C22]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualHopMatrices {
    pub c11: CMat,
    pub c12: CMat,
    pub c21: CMat,
    pub c22: CMat,
}

impl DualHopMatrices {
    pub fn new(ch: &ChannelRealization, relays: &[CMat], p1: &CMat, p2: &CMat) -> Self {
        use Terminal::*;
        DualHopMatrices {
            c11: dual_hop(ch, relays, p1, One, One),
            c12: dual_hop(ch, relays, p2, One, Two),
            c21: dual_hop(ch, relays, p1, Two, One),
            c22: dual_hop(ch, relays, p2, Two, Two),
        }
    }

    pub fn get(&self, i: Terminal, j: Terminal) -> &CMat {
        use Terminal::*;
        match (i, j) {
            (One, One) => &self.c11,
            (One, Two) => &self.c12,
            (Two, One) => &self.c21,
            (Two, Two) => &self.c22,
        }
    }
}

/// First slot: `y = H_1 P_1 s_1 + H_2 P_2 s_2 + w`.
pub fn relay_receive(
    ch: &ChannelRealization,
    p1: &CMat,
    p2: &CMat,
    s1: &CMat,
    s2: &CMat,
    w: &CMat,
) -> Result<CMat> {
    let rd = ch.h1.nrows();
    let cols = w.ncols();
    if p1.nrows() != ch.n_t()
        || p2.nrows() != ch.n_t()
        || s1.nrows() != p1.ncols()
        || s2.nrows() != p2.ncols()
        || w.nrows() != rd
        || s1.ncols() != cols
        || s2.ncols() != cols
    {
        return Err(Error::contract("relay_receive: inconsistent dimensions"));
    }
    Ok(&ch.h1 * (p1 * s1) + &ch.h2 * (p2 * s2) + w)
}

/// Second slot at terminal `i`: `r_i = G_i F y + n_i`.
pub fn terminal_receive(
    ch: &ChannelRealization,
    relays: &[CMat],
    y: &CMat,
    n_i: &CMat,
    i: Terminal,
) -> Result<CMat> {
    check_relays(ch, relays)?;
    if y.nrows() != ch.h1.nrows() || n_i.nrows() != ch.n_t() || n_i.ncols() != y.ncols() {
        return Err(Error::contract("terminal_receive: inconsistent dimensions"));
    }
    let n_r = ch.n_r;
    let mut r = n_i.clone();
    for (k, f) in relays.iter().enumerate() {
        let gk = ch.g(i).columns(k * n_r, n_r);
        r += gk * (f * y.rows(k * n_r, n_r));
    }
    Ok(r)
}

/// `r_i - C_ii s_i`.
pub fn cancel_self_interference(r_i: &CMat, c_ii: &CMat, s_i: &CMat) -> Result<CMat> {
    if c_ii.nrows() != r_i.nrows() || c_ii.ncols() != s_i.nrows() || s_i.ncols() != r_i.ncols() {
        return Err(Error::contract("cancel_self_interference: inconsistent dimensions"));
    }
    Ok(r_i - c_ii * s_i)
}

/// `K_{v_i v_i} = sigma2_w G_i F F^H G_i^H + sigma2_{n,i} I`.
pub fn noise_covariance(ch: &ChannelRealization, relays: &[CMat], cfg: &SystemConfig, i: Terminal) -> CMat {
    let gf = effective_second_hop(ch, relays, i);
    let n_t = ch.n_t();
    (&gf * gf.adjoint()) * C64::new(cfg.sigma2_w, 0.0)
        + CMat::identity(n_t, n_t) * C64::new(cfg.sigma2_n(i), 0.0)
}

/// `K_yy = sum_i H_i P_i P_i^H H_i^H + sigma2_w I`.
pub fn signal_covariance(ch: &ChannelRealization, p1: &CMat, p2: &CMat, cfg: &SystemConfig) -> CMat {
    let a = &ch.h1 * p1;
    let b = &ch.h2 * p2;
    let rd = ch.h1.nrows();
    &a * a.adjoint() + &b * b.adjoint() + CMat::identity(rd, rd) * C64::new(cfg.sigma2_w, 0.0)
}

/// Diagonal block `k` of `K_yy`, i.e. the covariance of what relay `k` hears.
pub fn relay_input_covariance(
    ch: &ChannelRealization,
    p1: &CMat,
    p2: &CMat,
    sigma2_w: f64,
    k: usize,
) -> CMat {
    let a = ch.h_block(Terminal::One, k) * p1;
    let b = ch.h_block(Terminal::Two, k) * p2;
    &a * a.adjoint() + &b * b.adjoint() + CMat::identity(ch.n_r, ch.n_r) * C64::new(sigma2_w, 0.0)
}

/// Average power transmitted by relay `k`: `tr(F_k K_{y_k y_k} F_k^H)`.
pub fn relay_transmit_power(
    ch: &ChannelRealization,
    p1: &CMat,
    p2: &CMat,
    f_k: &CMat,
    sigma2_w: f64,
    k: usize,
) -> f64 {
    let kyy = relay_input_covariance(ch, p1, p2, sigma2_w, k);
    (f_k * kyy * f_k.adjoint()).trace().re
}

/// `tr[(I + C^H K^{-1} C)^{-1}]`, the MSE of the Wiener decoder on one link.
pub fn link_mse_mmse(c: &CMat, k_vv: &CMat) -> Result<f64> {
    let kc = hpd_solve(k_vv, c).map_err(|_| Error::numeric("noise covariance is singular"))?;
    let m = CMat::identity(c.ncols(), c.ncols()) + c.adjoint() * kc;
    Ok(hpd_inverse(&m)?.trace().re)
}

/// MSE of an arbitrary linear decoder `D` on `r = C s + v`:
/// `|| D C - I ||_F^2 + tr(D K D^H)`.
pub fn link_mse_with_decoder(c: &CMat, k_vv: &CMat, d: &CMat) -> f64 {
    let e = d * c - CMat::identity(c.ncols(), c.ncols());
    e.norm_squared() + (d * k_vv * d.adjoint()).trace().re
}

/// Exact sum-MSE under Wiener decoders.
pub fn sum_mse_exact(
    ch: &ChannelRealization,
    p1: &CMat,
    p2: &CMat,
    relays: &[CMat],
    cfg: &SystemConfig,
) -> Result<f64> {
    check_relays(ch, relays)?;
    let mut total = 0.0;
    for src in Terminal::BOTH {
        let dst = src.other();
        let c = dual_hop(ch, relays, pick(p1, p2, src), dst, src);
        let k = noise_covariance(ch, relays, cfg, dst);
        total += link_mse_mmse(&c, &k)?;
    }
    Ok(total)
}

/// High-SNR surrogate: relay noise dropped from the noise covariance.
pub fn sum_mse_highsnr(
    ch: &ChannelRealization,
    p1: &CMat,
    p2: &CMat,
    relays: &[CMat],
    cfg: &SystemConfig,
) -> Result<f64> {
    check_relays(ch, relays)?;
    let mut total = 0.0;
    for src in Terminal::BOTH {
        let dst = src.other();
        let c = dual_hop(ch, relays, pick(p1, p2, src), dst, src);
        let n_t = ch.n_t();
        let k = CMat::identity(n_t, n_t) * C64::new(cfg.sigma2_n(dst), 0.0);
        total += link_mse_mmse(&c, &k)?;
    }
    Ok(total)
}

/// Sum-MSE for a fixed set of decoders (not necessarily Wiener).
pub fn sum_mse_with_decoders(ch: &ChannelRealization, state: &NetworkState, cfg: &SystemConfig) -> f64 {
    Terminal::BOTH
        .iter()
        .map(|&src| {
            let dst = src.other();
            let c = dual_hop(ch, &state.relays, state.p(src), dst, src);
            let k = noise_covariance(ch, &state.relays, cfg, dst);
            link_mse_with_decoder(&c, &k, state.d(dst))
        })
        .sum()
}

fn pick<'a>(p1: &'a CMat, p2: &'a CMat, t: Terminal) -> &'a CMat {
    match t {
        Terminal::One => p1,
        Terminal::Two => p2,
    }
}
