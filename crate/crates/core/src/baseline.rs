//! Alternating-minimization reference design.
//!
//! Starting from random feasible precoders and relay matrices, each outer
//! iteration
//!
//! 1. sets both decoders to their Wiener filters,
//! 2. updates the relay matrices one at a time, and
//! 3. updates both precoders,
//!
//! where steps 2 and 3 minimize the sum-MSE with the decoders held fixed. With
//! `D` fixed the MSE is a convex quadratic in each `F_k` and in `(P_1, P_2)`;
//! both blocks are handled by projected gradient with Armijo backtracking.
//! Every step is a descent step on the same objective, so the exact sum-MSE
//! (Wiener decoders) never increases from one outer iteration to the next.
//!
//! Constraints: `tr(P_i P_i^H) <= P_T(i)` and, per relay,
//! `tr(F_k K_{y_k y_k} F_k^H) <= P_relay`.

use rand::Rng;

use crate::channel::{ChannelRealization, SystemConfig, Terminal};
use crate::design::{wiener_decoders, DesignSolution};
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, hpd_cholesky, CMat, C64};
use crate::system::{relay_input_covariance, relay_transmit_power, sum_mse_exact};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;
const OUTER_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub max_iters: usize,
    /// Relative objective decrease below which an inner solve stops.
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    /// Average transmit power of every relay.
    pub p_relay: f64,
}

impl BaselineConfig {
    pub fn new(max_iters: usize, p_relay: f64) -> Self {
        BaselineConfig {
            max_iters,
            inner_tol: 1e-6,
            inner_max_iters: 30,
            p_relay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_relay > 0.0 && self.p_relay.is_finite()) {
            return Err(Error::InvalidConfig("baseline relay power must be positive".into()));
        }
        if !(self.inner_tol >= 0.0) || self.inner_max_iters == 0 {
            return Err(Error::InvalidConfig("baseline inner solver settings are invalid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub solution: DesignSolution,
    /// Exact sum-MSE at the initialization and after every outer iteration.
    pub mse_trace: Vec<f64>,
    pub iterations: usize,
    /// Relative change fell below the outer tolerance before `max_iters`.
    pub converged: bool,
    /// An inner solve produced a non-finite value; the last feasible iterate is returned.
    pub diverged: bool,
}

/// Scales `F_k` so that `tr(F_k K F_k^H) = p_relay`. Returns the scaled matrix and the factor.
pub fn scale_relay_power(f_k: &CMat, k_yy_k: &CMat, p_relay: f64) -> Result<(CMat, f64)> {
    let power = (f_k * k_yy_k * f_k.adjoint()).trace().re;
    if !(power > 0.0) {
        return Err(Error::contract("cannot scale a relay matrix that transmits no power"));
    }
    let alpha = (p_relay / power).sqrt();
    Ok((f_k * C64::new(alpha, 0.0), alpha))
}

/// Scales every relay of `sol` to transmit exactly `p_relay` and recomputes the Wiener decoders.
pub fn equalize_relay_power(
    sol: &mut DesignSolution,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    p_relay: f64,
) -> Result<()> {
    for k in 0..sol.relays.len() {
        let kyy = relay_input_covariance(ch, &sol.p1, &sol.p2, cfg.sigma2_w, k);
        sol.relays[k] = scale_relay_power(&sol.relays[k], &kyy, p_relay)?.0;
    }
    sol.refresh_decoders(ch, cfg)
}

// Real inner product Re tr(A^H B).
fn re_inner(a: &CMat, b: &CMat) -> f64 {
    a.zip_fold(b, 0.0, |acc, x, y| acc + (x.conj() * y).re)
}

fn scale_to_ball(x: &mut CMat, radius_sq: f64) {
    let e = x.norm_squared();
    if e > radius_sq {
        *x *= C64::new((radius_sq / e).sqrt(), 0.0);
    }
}

/// Random start: precoders and relays meet their power constraints with equality.
pub fn random_initialization<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    p_relay: f64,
    rng: &mut R,
) -> Result<DesignSolution> {
    let mut draw_p = |t: Terminal| {
        let p = complex_gaussian(cfg.n_t, cfg.n_s, 1.0, rng);
        let scale = (cfg.p_t(t) / p.norm_squared()).sqrt();
        p * C64::new(scale, 0.0)
    };
    let p1 = draw_p(Terminal::One);
    let p2 = draw_p(Terminal::Two);
    let mut relays = Vec::with_capacity(ch.n_c());
    for k in 0..ch.n_c() {
        let f = complex_gaussian(ch.n_r, ch.n_r, 1.0, rng);
        let kyy = relay_input_covariance(ch, &p1, &p2, cfg.sigma2_w, k);
        relays.push(scale_relay_power(&f, &kyy, p_relay)?.0);
    }
    let (d1, d2) = wiener_decoders(ch, &p1, &p2, &relays, cfg)?;
    Ok(DesignSolution {
        p1,
        p2,
        relays,
        d1,
        d2,
        closed_form: None,
    })
}

/// Runs the alternating design for at most `bcfg.max_iters` outer iterations.
pub fn baseline_design<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    bcfg: &BaselineConfig,
    rng: &mut R,
) -> Result<BaselineOutcome> {
    cfg.validate()?;
    bcfg.validate()?;
    ch.check_against(cfg)?;
    let mut sol = random_initialization(ch, cfg, bcfg.p_relay, rng)?;
    let mut mse = sum_mse_exact(ch, &sol.p1, &sol.p2, &sol.relays, cfg)?;
    let mut trace = vec![mse];
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;

    while iterations < bcfg.max_iters {
        iterations += 1;
        let prev = sol.clone();
        let step = (|| -> Result<()> {
            sol.refresh_decoders(ch, cfg)?;
            for k in 0..ch.n_c() {
                update_relay(ch, cfg, bcfg, &mut sol, k)?;
            }
            update_precoders(ch, cfg, bcfg, &mut sol)?;
            sol.refresh_decoders(ch, cfg)
        })();
        let next = step.and_then(|_| sum_mse_exact(ch, &sol.p1, &sol.p2, &sol.relays, cfg));
        match next {
            Ok(v) if v.is_finite() => {
                let change = (mse - v).abs() / mse.max(f64::MIN_POSITIVE);
                mse = v;
                trace.push(mse);
                if change < OUTER_REL_TOL {
                    converged = true;
                    break;
                }
            }
            _ => {
                sol = prev;
                diverged = true;
                break;
            }
        }
    }

    Ok(BaselineOutcome {
        solution: sol,
        mse_trace: trace,
        iterations,
        converged,
        diverged,
    })
}

/// Terms of the fixed-decoder MSE that involve relay `k`, for both receivers:
/// `sum_i || A_i F_k M_i + R_i ||^2 + sigma2_w || A_i F_k ||^2`.
struct RelayBlock {
    a: [CMat; 2],
    m: [CMat; 2],
    r: [CMat; 2],
    sigma2_w: f64,
}

impl RelayBlock {
    fn objective(&self, f: &CMat) -> f64 {
        (0..2)
            .map(|i| {
                let af = &self.a[i] * f;
                (&af * &self.m[i] + &self.r[i]).norm_squared() + self.sigma2_w * af.norm_squared()
            })
            .sum()
    }

    /// Conjugate gradient matrix `G` with `dJ = 2 Re tr(G^H dF)`.
    fn gradient(&self, f: &CMat) -> CMat {
        let mut g = CMat::zeros(f.nrows(), f.ncols());
        for i in 0..2 {
            let af = &self.a[i] * f;
            let e = &af * &self.m[i] + &self.r[i];
            g += self.a[i].adjoint() * (e * self.m[i].adjoint() + af * C64::new(self.sigma2_w, 0.0));
        }
        g
    }
}

fn relay_block(ch: &ChannelRealization, cfg: &SystemConfig, sol: &DesignSolution, k: usize) -> RelayBlock {
    let n_r = ch.n_r;
    let mut a = Vec::with_capacity(2);
    let mut m = Vec::with_capacity(2);
    let mut r = Vec::with_capacity(2);
    for dst in Terminal::BOTH {
        let src = dst.other();
        let d = sol.d(dst);
        let p = sol.p(src);
        let n_s = p.ncols();
        let mut rest = -CMat::identity(n_s, n_s);
        for (kk, f) in sol.relays.iter().enumerate() {
            if kk != k {
                let gk = ch.g(dst).columns(kk * n_r, n_r);
                let hk = ch.h(src).rows(kk * n_r, n_r);
                rest += d * (gk * (f * (hk * p)));
            }
        }
        a.push(d * ch.g(dst).columns(k * n_r, n_r));
        m.push(ch.h(src).rows(k * n_r, n_r) * p);
        r.push(rest);
    }
    let arr = |v: Vec<CMat>| -> [CMat; 2] { v.try_into().expect("two terminals") };
    RelayBlock {
        a: arr(a),
        m: arr(m),
        r: arr(r),
        sigma2_w: cfg.sigma2_w,
    }
}

// Projected gradient in X = F_k L (K = L L^H), where the power constraint is a ball.
fn update_relay(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    bcfg: &BaselineConfig,
    sol: &mut DesignSolution,
    k: usize,
) -> Result<()> {
    let block = relay_block(ch, cfg, sol, k);
    let kyy = relay_input_covariance(ch, &sol.p1, &sol.p2, cfg.sigma2_w, k);
    let l = hpd_cholesky(&kyy)?;
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numeric("relay input covariance factor is singular"))?;
    let to_f = |x: &CMat| x * &l_inv;

    let mut x = &sol.relays[k] * &l;
    scale_to_ball(&mut x, bcfg.p_relay);
    let mut val = block.objective(&to_f(&x));
    let mut step = 1.0 / (block.a.iter().map(|a| a.norm_squared()).sum::<f64>() * kyy.norm()).max(1e-12);

    for _ in 0..bcfg.inner_max_iters {
        let g_x = block.gradient(&to_f(&x)) * l_inv.adjoint();
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let mut trial = &x - &g_x * C64::new(step, 0.0);
            scale_to_ball(&mut trial, bcfg.p_relay);
            let tv = block.objective(&to_f(&trial));
            if !tv.is_finite() {
                return Err(Error::numeric("relay update diverged"));
            }
            if tv <= val + 2.0 * ARMIJO * re_inner(&g_x, &(&trial - &x)) {
                accepted = Some((trial, tv));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, tv)) = accepted else { break };
        let decrease = (val - tv) / val.max(f64::MIN_POSITIVE);
        x = trial;
        val = tv;
        step *= 2.0;
        if decrease < bcfg.inner_tol {
            break;
        }
    }
    sol.relays[k] = to_f(&x);
    Ok(())
}

// Largest beta <= 1 such that scaling both precoders by beta keeps every relay within power.
fn relay_feasible_scale(ch: &ChannelRealization, cfg: &SystemConfig, p1: &CMat, p2: &CMat, relays: &[CMat], p_relay: f64) -> f64 {
    let mut beta: f64 = 1.0;
    for (k, f) in relays.iter().enumerate() {
        let signal = (f * ch.h_block(Terminal::One, k) * p1).norm_squared()
            + (f * ch.h_block(Terminal::Two, k) * p2).norm_squared();
        let noise = cfg.sigma2_w * f.norm_squared();
        if signal + noise > p_relay && signal > 0.0 {
            beta = beta.min(((p_relay - noise).max(0.0) / signal).sqrt());
        }
    }
    beta
}

fn update_precoders(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    bcfg: &BaselineConfig,
    sol: &mut DesignSolution,
) -> Result<()> {
    // Only the link leaving terminal j depends on P_j: || D_i T_j P_j - I ||^2, i = other(j).
    let dt: Vec<CMat> = Terminal::BOTH
        .iter()
        .map(|&src| {
            let dst = src.other();
            let gf = crate::system::effective_second_hop(ch, &sol.relays, dst);
            sol.d(dst) * gf * ch.h(src)
        })
        .collect();
    let objective = |p: &[CMat; 2]| -> f64 {
        (0..2)
            .map(|j| (&dt[j] * &p[j] - CMat::identity(p[j].ncols(), p[j].ncols())).norm_squared())
            .sum()
    };
    let gradient = |p: &[CMat; 2]| -> [CMat; 2] {
        let g = |j: usize| dt[j].adjoint() * (&dt[j] * &p[j] - CMat::identity(p[j].ncols(), p[j].ncols()));
        [g(0), g(1)]
    };
    let budgets = [cfg.p_t1, cfg.p_t2];

    let mut p = [sol.p1.clone(), sol.p2.clone()];
    let mut val = objective(&p);
    let mut step = 1.0 / dt.iter().map(|m| m.norm_squared()).fold(1e-12, f64::max);

    for _ in 0..bcfg.inner_max_iters {
        let g = gradient(&p);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let mut trial = [&p[0] - &g[0] * C64::new(step, 0.0), &p[1] - &g[1] * C64::new(step, 0.0)];
            for j in 0..2 {
                scale_to_ball(&mut trial[j], budgets[j]);
            }
            let beta = relay_feasible_scale(ch, cfg, &trial[0], &trial[1], &sol.relays, bcfg.p_relay);
            if beta < 1.0 {
                for t in trial.iter_mut() {
                    *t *= C64::new(beta, 0.0);
                }
            }
            let tv = objective(&trial);
            if !tv.is_finite() {
                return Err(Error::numeric("precoder update diverged"));
            }
            let dir = re_inner(&g[0], &(&trial[0] - &p[0])) + re_inner(&g[1], &(&trial[1] - &p[1]));
            if tv <= val + 2.0 * ARMIJO * dir && tv <= val {
                accepted = Some((trial, tv));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, tv)) = accepted else { break };
        let decrease = (val - tv) / val.max(f64::MIN_POSITIVE);
        p = trial;
        val = tv;
        step *= 2.0;
        if decrease < bcfg.inner_tol {
            break;
        }
    }
    let [p1, p2] = p;
    sol.p1 = p1;
    sol.p2 = p2;
    Ok(())
}

/// Per-relay transmit powers of a solution.
pub fn relay_powers(ch: &ChannelRealization, cfg: &SystemConfig, sol: &DesignSolution) -> Vec<f64> {
    sol.relays
        .iter()
        .enumerate()
        .map(|(k, f)| relay_transmit_power(ch, &sol.p1, &sol.p2, f, cfg.sigma2_w, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channels;
    use crate::design::design;
    use crate::system::sum_mse_with_decoders;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(p: f64, n_c: usize) -> SystemConfig {
        SystemConfig {
            n_c,
            p_t1: p,
            p_t2: p,
            p_r_tilde1: n_c as f64 * p,
            p_r_tilde2: n_c as f64 * p,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn scaling_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = complex_gaussian(4, 4, 1.0, &mut rng);
        let x = complex_gaussian(4, 4, 1.0, &mut rng);
        let k = &x * x.adjoint() + CMat::identity(4, 4);
        let (g, alpha) = scale_relay_power(&f, &k, 3.0).unwrap();
        let power = (&g * &k * g.adjoint()).trace().re;
        assert!((power - 3.0).abs() <= 1e-12 * 3.0);
        let (_, a1) = scale_relay_power(&g, &k, 3.0).unwrap();
        assert!((a1 - 1.0).abs() < 1e-12);
        let (_, a2) = scale_relay_power(&(&g * C64::new(2.0, 0.0)), &k, 3.0).unwrap();
        assert!((a2 - 0.5).abs() < 1e-12);
        assert!(alpha > 0.0);
        assert!(scale_relay_power(&CMat::zeros(4, 4), &k, 1.0).is_err());
    }

    #[test]
    fn zero_iterations_returns_initialization() {
        let c = cfg(4.0, 2);
        let ch = draw_channels(&c, &mut ChaCha8Rng::seed_from_u64(2));
        let b = BaselineConfig::new(0, 4.0);
        let out = baseline_design(&ch, &c, &b, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let init = random_initialization(&ch, &c, 4.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(out.solution, init);
        assert_eq!(out.mse_trace.len(), 1);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn initialization_meets_constraints_with_equality() {
        let c = cfg(4.0, 3);
        let ch = draw_channels(&c, &mut ChaCha8Rng::seed_from_u64(4));
        let init = random_initialization(&ch, &c, 5.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!((init.p1.norm_squared() - 4.0).abs() < 1e-12);
        for p in relay_powers(&ch, &c, &init) {
            assert!((p - 5.0).abs() < 1e-12 * 5.0);
        }
    }

    #[test]
    fn sum_mse_is_monotone_and_feasible() {
        for (seed, p, n_c) in [(6u64, 4.0, 2usize), (7, 40.0, 3), (8, 400.0, 4), (9, 1.0, 2)] {
            let c = cfg(p, n_c);
            let ch = draw_channels(&c, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = BaselineConfig::new(10, p);
            let out = baseline_design(&ch, &c, &b, &mut ChaCha8Rng::seed_from_u64(seed + 100)).unwrap();
            assert!(!out.diverged);
            for w in out.mse_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-8, "trace {:?}", out.mse_trace);
            }
            assert!(out.mse_trace.last().unwrap() < &out.mse_trace[0]);
            assert!(out.solution.p1.norm_squared() <= p * (1.0 + 1e-9));
            for pw in relay_powers(&ch, &c, &out.solution) {
                assert!(pw <= p * (1.0 + 1e-9), "relay power {pw} > {p}");
            }
        }
    }

    #[test]
    fn decoders_are_stationary_after_update() {
        let c = cfg(10.0, 2);
        let ch = draw_channels(&c, &mut ChaCha8Rng::seed_from_u64(10));
        let out = baseline_design(&ch, &c, &BaselineConfig::new(3, 10.0), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let state = out.solution.state();
        let base = sum_mse_with_decoders(&ch, &state, &c);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let mut s = state.clone();
            s.d1 += complex_gaussian(2, 2, 1e-6, &mut rng);
            s.d2 += complex_gaussian(2, 2, 1e-6, &mut rng);
            assert!(sum_mse_with_decoders(&ch, &s, &c) >= base);
        }
    }

    #[test]
    fn equalized_powers_match_between_methods() {
        let c = cfg(8.0, 3);
        let ch = draw_channels(&c, &mut ChaCha8Rng::seed_from_u64(13));
        let mut proposed = design(&ch, &c).unwrap();
        let mut base = baseline_design(&ch, &c, &BaselineConfig::new(5, 8.0), &mut ChaCha8Rng::seed_from_u64(14))
            .unwrap()
            .solution;
        equalize_relay_power(&mut proposed, &ch, &c, 8.0).unwrap();
        equalize_relay_power(&mut base, &ch, &c, 8.0).unwrap();
        for (a, b) in relay_powers(&ch, &c, &proposed).iter().zip(relay_powers(&ch, &c, &base)) {
            assert!((a - b).abs() <= 1e-12 * b);
            assert!((a - 8.0).abs() <= 1e-12 * 8.0);
        }
    }

    #[test]
    fn relay_block_gradient_matches_finite_differences() {
        let c = cfg(3.0, 2);
        let ch = draw_channels(&c, &mut ChaCha8Rng::seed_from_u64(15));
        let sol = random_initialization(&ch, &c, 3.0, &mut ChaCha8Rng::seed_from_u64(16)).unwrap();
        let block = relay_block(&ch, &c, &sol, 1);
        // Block objective differs from the full fixed-decoder MSE by a constant.
        let full = sum_mse_with_decoders(&ch, &sol.state(), &c);
        let offset = full - block.objective(&sol.relays[1]);
        let mut s2 = sol.state();
        s2.relays[1] = &s2.relays[1] * C64::new(1.3, 0.2);
        let full2 = sum_mse_with_decoders(&ch, &s2, &c);
        assert!((full2 - block.objective(&s2.relays[1]) - offset).abs() < 1e-9);

        let f = &sol.relays[1];
        let g = block.gradient(f);
        let h = 1e-6;
        for (r, col) in [(0, 0), (2, 3), (3, 1)] {
            for dir in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let mut fp = f.clone();
                fp[(r, col)] += dir * h;
                let mut fm = f.clone();
                fm[(r, col)] -= dir * h;
                let fd = (block.objective(&fp) - block.objective(&fm)) / (2.0 * h);
                let analytic = 2.0 * (g[(r, col)].conj() * dir).re;
                assert!((fd - analytic).abs() < 1e-5 * analytic.abs().max(1.0), "{fd} vs {analytic}");
            }
        }
    }
}
