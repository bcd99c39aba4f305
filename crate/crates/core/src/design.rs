//! Closed-form joint design of precoders, relay matrices and decoders.
//!
//! The relaxed problem splits into two independent links. For the link from
//! terminal `i` to terminal `j = other(i)`:
//!
//! 1. `H_i = U Λ V^H` (ascending).
//! 2. Allocate `z` (transmit) and `w` (relayed) powers over the strongest
//!    singular values of `H_i`.
//! 3. `P_i = V_right diag(sqrt z)` and `B_j = Q_j diag(sqrt w) U_right^H`.
//!
//! Each relay then solves `[G_{1,k}; G_{2,k}] F_k = [B_{1,k}; B_{2,k}]` in the
//! minimum-norm sense, and the terminals use Wiener decoders.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, SystemConfig, Terminal};
use crate::error::{Error, Result};
use crate::linalg::{
    default_rank_tol, hpd_solve, pinv_from_svd, real_diag, scale_columns, svd_ascending_thin, CMat,
    SvdAscending,
};
use crate::power::{solve_pair_default, PowerAllocation, ScalarProblem};
use crate::system::{dual_hop, noise_covariance, NetworkState};

/// Intermediate quantities of the closed form, kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormParts {
    /// `B_1 = G_1 F` target (`n_t x n_c n_r`).
    pub b1: CMat,
    pub b2: CMat,
    /// Diagonal of `Ω_i` (`sqrt z`), ascending singular-value order.
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    /// Diagonal of `Δ_i` (`sqrt w`), length `n_t`.
    pub delta1: Vec<f64>,
    pub delta2: Vec<f64>,
    pub q1: CMat,
    pub q2: CMat,
    /// Allocation of the link leaving terminal 1 (`z_1`, `w_2`).
    pub alloc1: PowerAllocation,
    /// Allocation of the link leaving terminal 2 (`z_2`, `w_1`).
    pub alloc2: PowerAllocation,
}

impl ClosedFormParts {
    pub fn b(&self, t: Terminal) -> &CMat {
        match t {
            Terminal::One => &self.b1,
            Terminal::Two => &self.b2,
        }
    }

    pub fn q(&self, t: Terminal) -> &CMat {
        match t {
            Terminal::One => &self.q1,
            Terminal::Two => &self.q2,
        }
    }
}

/// Precoders, relay matrices and decoders produced by a design method.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSolution {
    pub p1: CMat,
    pub p2: CMat,
    pub relays: Vec<CMat>,
    pub d1: CMat,
    pub d2: CMat,
    /// Present for the closed-form design only.
    pub closed_form: Option<ClosedFormParts>,
}

impl DesignSolution {
    pub fn state(&self) -> NetworkState {
        NetworkState {
            p1: self.p1.clone(),
            p2: self.p2.clone(),
            relays: self.relays.clone(),
            d1: self.d1.clone(),
            d2: self.d2.clone(),
        }
    }

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

    /// Replaces both decoders by the Wiener filters for the current `P`, `F`.
    pub fn refresh_decoders(&mut self, ch: &ChannelRealization, cfg: &SystemConfig) -> Result<()> {
        let (d1, d2) = wiener_decoders(ch, &self.p1, &self.p2, &self.relays, cfg)?;
        self.d1 = d1;
        self.d2 = d2;
        Ok(())
    }
}

/// `P_i = V_right Ω`: the `len(omega)` strongest right singular vectors scaled by `omega`.
pub fn build_precoder(svd_h: &SvdAscending, omega: &[f64]) -> CMat {
    scale_columns(&svd_h.v_right(omega.len()), omega)
}

/// `B = Q Δ U_right^H` with `U_right` the `len(delta)` strongest left singular vectors.
pub fn build_relay_target(svd_h: &SvdAscending, delta: &[f64], q: &CMat) -> Result<CMat> {
    if q.ncols() != delta.len() {
        return Err(Error::contract(format!(
            "Q has {} columns but Δ has {} entries",
            q.ncols(),
            delta.len()
        )));
    }
    Ok(q * real_diag(delta) * svd_h.u_right(delta.len()).adjoint())
}

/// Minimum-norm per-relay solutions `F_k = pinv([G_1k; G_2k]) [B_1k; B_2k]`.
pub fn relay_matrices(ch: &ChannelRealization, b1: &CMat, b2: &CMat) -> Result<Vec<CMat>> {
    let n_r = ch.n_r;
    let n_t = ch.n_t();
    (0..ch.n_c())
        .map(|k| {
            let gt = ch.stacked_second_hop(k);
            let svd = svd_ascending_thin(&gt)?;
            let tol = default_rank_tol(gt.nrows(), gt.ncols());
            if svd.rank() < 2 * n_t || svd.min_sigma() <= tol * svd.max_sigma() {
                return Err(Error::DegenerateChannel(format!(
                    "stacked second-hop channel of relay {k} is not full row rank"
                )));
            }
            let mut bt = CMat::zeros(2 * n_t, n_r);
            bt.rows_mut(0, n_t).copy_from(&b1.columns(k * n_r, n_r));
            bt.rows_mut(n_t, n_t).copy_from(&b2.columns(k * n_r, n_r));
            Ok(pinv_from_svd(&svd, tol) * bt)
        })
        .collect()
}

/// `D = C^H (C C^H + K)^{-1}`.
pub fn wiener_decoder(c: &CMat, k_vv: &CMat) -> Result<CMat> {
    let m = c * c.adjoint() + k_vv;
    // (C C^H + K) X = C  =>  D = X^H.
    let x = hpd_solve(&m, c).map_err(|_| Error::numeric("C C^H + K is singular"))?;
    Ok(x.adjoint())
}

/// Wiener decoders at both terminals for the given `P`, `F`.
pub fn wiener_decoders(
    ch: &ChannelRealization,
    p1: &CMat,
    p2: &CMat,
    relays: &[CMat],
    cfg: &SystemConfig,
) -> Result<(CMat, CMat)> {
    let d = |dst: Terminal| -> Result<CMat> {
        let src = dst.other();
        let p = if src == Terminal::One { p1 } else { p2 };
        let c = dual_hop(ch, relays, p, dst, src);
        wiener_decoder(&c, &noise_covariance(ch, relays, cfg, dst))
    };
    Ok((d(Terminal::One)?, d(Terminal::Two)?))
}

/// Default `Q`: the leading `cols` columns of the `n x n` identity.
pub fn default_q(n: usize, cols: usize) -> CMat {
    CMat::identity(n, cols)
}

/// Closed-form design with `Q_1 = Q_2 = I`.
pub fn design(ch: &ChannelRealization, cfg: &SystemConfig) -> Result<DesignSolution> {
    design_with_q(ch, cfg, &default_q(cfg.n_t, cfg.n_t), &default_q(cfg.n_t, cfg.n_t))
}

/// Closed-form design with caller-chosen semi-unitary `Q_1`, `Q_2` (`n_t x n_t`).
pub fn design_with_q(ch: &ChannelRealization, cfg: &SystemConfig, q1: &CMat, q2: &CMat) -> Result<DesignSolution> {
    cfg.validate()?;
    ch.check_against(cfg)?;
    for (name, q) in [("Q1", q1), ("Q2", q2)] {
        if q.shape() != (cfg.n_t, cfg.n_t) {
            return Err(Error::contract(format!("{name} must be {0}x{0}", cfg.n_t)));
        }
        let err = (q.adjoint() * q - CMat::identity(cfg.n_t, cfg.n_t)).norm();
        if err > 1e-10 {
            return Err(Error::contract(format!("{name} is not semi-unitary (error {err:e})")));
        }
    }

    let n_t = cfg.n_t;
    let n_s = cfg.n_s;
    let mut svds = Vec::with_capacity(2);
    for src in Terminal::BOTH {
        let h = ch.h(src);
        let svd = svd_ascending_thin(h)?;
        let tol = default_rank_tol(h.nrows(), h.ncols());
        if svd.min_sigma() <= tol * svd.max_sigma() {
            return Err(Error::DegenerateChannel(format!(
                "first-hop channel of terminal {} is rank deficient",
                src.index() + 1
            )));
        }
        svds.push(svd);
    }

    // Link leaving `src`: transmit budget of `src`, relayed budget and noise of the receiver.
    let mut allocs = Vec::with_capacity(2);
    for src in Terminal::BOTH {
        let dst = src.other();
        let prob = ScalarProblem::from_singular_values(
            svds[src.index()].sigma_right(n_s),
            cfg.sigma2_n(dst),
            cfg.p_t(src),
            cfg.p_r_tilde(dst),
        )?;
        allocs.push(solve_pair_default(&prob)?);
    }

    let omega = |a: &PowerAllocation| -> Vec<f64> { a.z.iter().map(|v| v.sqrt()).collect() };
    // Δ has n_t entries; with fewer streams the weakest directions carry nothing.
    let delta = |a: &PowerAllocation| -> Vec<f64> {
        let mut d = vec![0.0; n_t - n_s];
        d.extend(a.w.iter().map(|v| v.sqrt()));
        d
    };
    let omega1 = omega(&allocs[0]);
    let omega2 = omega(&allocs[1]);
    // Δ_2 belongs to the link leaving terminal 1 and Δ_1 to the one leaving terminal 2.
    let delta2 = delta(&allocs[0]);
    let delta1 = delta(&allocs[1]);

    let p1 = build_precoder(&svds[0], &omega1);
    let p2 = build_precoder(&svds[1], &omega2);
    let b2 = build_relay_target(&svds[0], &delta2, q2)?;
    let b1 = build_relay_target(&svds[1], &delta1, q1)?;

    let relays = relay_matrices(ch, &b1, &b2)?;
    let (d1, d2) = wiener_decoders(ch, &p1, &p2, &relays, cfg)?;

    let mut allocs = allocs.into_iter();
    Ok(DesignSolution {
        p1,
        p2,
        relays,
        d1,
        d2,
        closed_form: Some(ClosedFormParts {
            b1,
            b2,
            omega1,
            omega2,
            delta1,
            delta2,
            q1: q1.clone(),
            q2: q2.clone(),
            alloc1: allocs.next().expect("two allocations"),
            alloc2: allocs.next().expect("two allocations"),
        }),
    })
}

/// Objective of the relaxed problem in `(P, B)`:
/// `sum_i tr[(I + sigma_{n,j}^{-2} P_i^H H_i^H B_j^H B_j H_i P_i)^{-1}]`, `j = other(i)`.
pub fn relaxed_objective(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    p1: &CMat,
    p2: &CMat,
    b1: &CMat,
    b2: &CMat,
) -> Result<f64> {
    let mut total = 0.0;
    for src in Terminal::BOTH {
        let dst = src.other();
        let (p, b) = match src {
            Terminal::One => (p1, b2),
            Terminal::Two => (p2, b1),
        };
        let c = b * ch.h(src) * p;
        let m = CMat::identity(p.ncols(), p.ncols()) + c.adjoint() * &c / crate::C64::new(cfg.sigma2_n(dst), 0.0);
        total += crate::linalg::hpd_inverse(&m)?.trace().re;
    }
    Ok(total)
}

/// Serializable mirror of the allocation for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationSummary {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&PowerAllocation> for AllocationSummary {
    fn from(a: &PowerAllocation) -> Self {
        AllocationSummary {
            z: a.z.clone(),
            w: a.w.clone(),
            objective: a.objective,
            iterations: a.iterations,
            converged: a.converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channels;
    use crate::linalg::{complex_gaussian, energy, random_semi_unitary, random_unitary, svd_ascending};
    use crate::system::{link_mse_with_decoder, sum_mse_highsnr};
    use crate::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SystemConfig {
        SystemConfig {
            p_t1: 3.0,
            p_t2: 5.0,
            p_r_tilde1: 4.0,
            p_r_tilde2: 2.0,
            sigma2_n1: 0.5,
            sigma2_n2: 0.8,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn scalar_specialization_matches_hand_kkt() {
        // n_t = n_s = 1, n_r = 2, n_c = 1: both budgets bind on the single mode.
        let cfg = SystemConfig {
            n_t: 1,
            n_s: 1,
            n_r: 2,
            n_c: 1,
            p_t1: 2.0,
            p_t2: 3.0,
            p_r_tilde1: 0.5,
            p_r_tilde2: 1.5,
            ..SystemConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = draw_channels(&cfg, &mut rng);
        let sol = design(&ch, &cfg).unwrap();
        let parts = sol.closed_form.as_ref().unwrap();
        assert!((sol.p1.norm() - 2.0f64.sqrt()).abs() < 1e-12);
        assert!((sol.p2.norm() - 3.0f64.sqrt()).abs() < 1e-12);
        assert!((parts.b2.norm() - 1.5f64.sqrt()).abs() < 1e-12);
        assert!((parts.b1.norm() - 0.5f64.sqrt()).abs() < 1e-12);
        // |B_2 H_1 P_1| = sqrt(w z) |H_1|.
        let c = &parts.b2 * &ch.h1 * &sol.p1;
        assert!((c.norm() - (1.5f64 * 2.0).sqrt() * ch.h1.norm()).abs() < 1e-10);
    }

    #[test]
    fn precoder_columns_are_orthogonal() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = draw_channels(&cfg, &mut rng);
        let sol = design(&ch, &cfg).unwrap();
        let parts = sol.closed_form.unwrap();
        let g = sol.p1.adjoint() * &sol.p1;
        let expected = real_diag(&parts.alloc1.z);
        assert!((g - expected).norm() < 1e-12);
    }

    #[test]
    fn reference_configuration_dimensions() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = draw_channels(&cfg, &mut rng);
        let sol = design(&ch, &cfg).unwrap();
        assert_eq!(sol.p1.shape(), (2, 2));
        assert_eq!(sol.p2.shape(), (2, 2));
        assert_eq!(sol.relays.len(), 2);
        assert!(sol.relays.iter().all(|f| f.shape() == (4, 4)));
        assert_eq!(sol.d1.shape(), (2, 2));
        let parts = sol.closed_form.unwrap();
        assert_eq!(parts.b1.shape(), (2, 8));
        assert!(energy(&sol.p1) <= cfg.p_t1 * (1.0 + 1e-9));
        assert!(energy(&sol.p2) <= cfg.p_t2 * (1.0 + 1e-9));
        assert!(energy(&parts.b1) <= cfg.p_r_tilde1 * (1.0 + 1e-9));
        assert!(energy(&parts.b2) <= cfg.p_r_tilde2 * (1.0 + 1e-9));
        for q in [&parts.q1, &parts.q2] {
            assert!((q.adjoint() * q - CMat::identity(2, 2)).norm() < 1e-10);
        }
    }

    #[test]
    fn precoder_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = complex_gaussian(8, 2, 1.0, &mut rng);
        let svd = svd_ascending_thin(&h).unwrap();
        assert_eq!(build_precoder(&svd, &[0.0, 0.0]), CMat::zeros(2, 2));
        let p = build_precoder(&svd, &[1.0, 1.0]);
        assert!((&p - svd.v_right(2)).norm() < 1e-15);
        let omega = [0.7, 1.9];
        let p = build_precoder(&svd, &omega);
        assert!((energy(&p) - (0.49 + 3.61)).abs() < 1e-12);
        let s = svd_ascending(&(&h * &p)).unwrap();
        let mut expected = [svd.sigma[0] * 0.7, svd.sigma[1] * 1.9];
        expected.sort_by(f64::total_cmp);
        assert!((s.sigma[0] - expected[0]).abs() < 1e-10);
        assert!((s.sigma[1] - expected[1]).abs() < 1e-10);
    }

    #[test]
    fn relay_target_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = complex_gaussian(8, 2, 1.0, &mut rng);
        let svd = svd_ascending_thin(&h).unwrap();
        let eye = CMat::identity(2, 2);
        assert_eq!(build_relay_target(&svd, &[0.0, 0.0], &eye).unwrap(), CMat::zeros(2, 8));
        let b = build_relay_target(&svd, &[1.0, 1.0], &eye).unwrap();
        assert!((energy(&b) - 2.0).abs() < 1e-12);
        let q = random_unitary(2, &mut rng);
        let w = [0.3, 2.2];
        let delta: Vec<f64> = w.iter().map(|x: &f64| x.sqrt()).collect();
        let b = build_relay_target(&svd, &delta, &q).unwrap();
        assert!((energy(&b) - 2.5).abs() < 1e-12);
        let s = svd_ascending(&(&b * &h)).unwrap();
        let mut expected = [w[0].sqrt() * svd.sigma[0], w[1].sqrt() * svd.sigma[1]];
        expected.sort_by(f64::total_cmp);
        assert!((s.sigma[0] - expected[0]).abs() < 1e-9);
        assert!((s.sigma[1] - expected[1]).abs() < 1e-9);
        assert!(build_relay_target(&svd, &[1.0], &eye).is_err());
    }

    #[test]
    fn relay_matrices_cases() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = draw_channels(&cfg, &mut rng);
        let zero = CMat::zeros(2, 8);
        let f = relay_matrices(&ch, &zero, &zero).unwrap();
        assert!(f.iter().all(|fk| fk.norm() == 0.0));

        // n_r = 2 n_t: square stacked channel, F_k = G^{-1} B.
        let b1 = complex_gaussian(2, 8, 1.0, &mut rng);
        let b2 = complex_gaussian(2, 8, 1.0, &mut rng);
        let f = relay_matrices(&ch, &b1, &b2).unwrap();
        for (k, fk) in f.iter().enumerate() {
            let gt = ch.stacked_second_hop(k);
            let inv = gt.clone().try_inverse().unwrap();
            let mut bt = CMat::zeros(4, 4);
            bt.rows_mut(0, 2).copy_from(&b1.columns(4 * k, 4));
            bt.rows_mut(2, 2).copy_from(&b2.columns(4 * k, 4));
            assert!((fk - inv * &bt).norm() < 1e-9 * fk.norm());
        }
    }

    #[test]
    fn relay_matrices_are_minimum_norm() {
        let cfg = SystemConfig { n_r: 6, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ch = draw_channels(&cfg, &mut rng);
        let sol = design(&ch, &cfg).unwrap();
        let parts = sol.closed_form.as_ref().unwrap();
        for (k, fk) in sol.relays.iter().enumerate() {
            let gt = ch.stacked_second_hop(k);
            let mut bt = CMat::zeros(4, 6);
            bt.rows_mut(0, 2).copy_from(&parts.b1.columns(6 * k, 6));
            bt.rows_mut(2, 2).copy_from(&parts.b2.columns(6 * k, 6));
            assert!((&gt * fk - &bt).norm() <= 1e-9 * bt.norm());
            // Null space of G~_k from the full SVD.
            let s = svd_ascending(&gt).unwrap();
            let null = s.v.columns(0, 2).into_owned();
            for _ in 0..20 {
                let n = &null * complex_gaussian(2, 6, rng.random_range(0.01..2.0), &mut rng);
                assert!((&gt * &n).norm() < 1e-10);
                assert!(fk.norm() <= (fk + n).norm());
            }
        }
    }

    #[test]
    fn degenerate_channels_are_reported() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ch = draw_channels(&cfg, &mut rng);
        let col = ch.h1.column(0).into_owned();
        ch.h1.set_column(1, &(col * C64::new(2.0, -1.0)));
        assert!(matches!(design(&ch, &cfg), Err(Error::DegenerateChannel(_))));

        let mut ch = draw_channels(&cfg, &mut rng);
        let row = ch.g1.row(0).into_owned();
        ch.g2.set_row(0, &row);
        assert!(matches!(design(&ch, &cfg), Err(Error::DegenerateChannel(_))));
    }

    #[test]
    fn wiener_cases() {
        let d = wiener_decoder(&CMat::identity(2, 2), &CMat::identity(2, 2)).unwrap();
        assert!((d - CMat::identity(2, 2) * C64::new(0.5, 0.0)).norm() < 1e-15);
        let d = wiener_decoder(&CMat::zeros(2, 2), &CMat::identity(2, 2)).unwrap();
        assert_eq!(d, CMat::zeros(2, 2));
    }

    #[test]
    fn wiener_is_stationary_by_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = complex_gaussian(3, 2, 1.0, &mut rng);
        let x = complex_gaussian(3, 3, 1.0, &mut rng);
        let k = &x * x.adjoint() + CMat::identity(3, 3);
        let d = wiener_decoder(&c, &k).unwrap();
        let h = 1e-6;
        let mut grad_sq = 0.0;
        for r in 0..d.nrows() {
            for col in 0..d.ncols() {
                for dir in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                    let mut plus = d.clone();
                    plus[(r, col)] += dir * h;
                    let mut minus = d.clone();
                    minus[(r, col)] -= dir * h;
                    let g = (link_mse_with_decoder(&c, &k, &plus) - link_mse_with_decoder(&c, &k, &minus)) / (2.0 * h);
                    grad_sq += g * g;
                }
            }
        }
        assert!(grad_sq.sqrt() < 1e-6, "gradient norm {}", grad_sq.sqrt());
    }

    #[test]
    fn highsnr_objective_matches_allocation() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ch = draw_channels(&cfg, &mut rng);
        let sol = design(&ch, &cfg).unwrap();
        let parts = sol.closed_form.as_ref().unwrap();
        let h = sum_mse_highsnr(&ch, &sol.p1, &sol.p2, &sol.relays, &cfg).unwrap();
        let r = relaxed_objective(&ch, &cfg, &sol.p1, &sol.p2, &parts.b1, &parts.b2).unwrap();
        let a = parts.alloc1.objective + parts.alloc2.objective;
        assert!((h - a).abs() < 1e-9);
        assert!((r - a).abs() < 1e-9);
    }

    #[test]
    fn objective_invariant_to_q() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ch = draw_channels(&cfg, &mut rng);
        let base = design(&ch, &cfg).unwrap();
        let base_obj = sum_mse_highsnr(&ch, &base.p1, &base.p2, &base.relays, &cfg).unwrap();
        for _ in 0..10 {
            let q1 = random_semi_unitary(2, 2, &mut rng);
            let q2 = random_semi_unitary(2, 2, &mut rng);
            let sol = design_with_q(&ch, &cfg, &q1, &q2).unwrap();
            let parts = sol.closed_form.as_ref().unwrap();
            let obj = sum_mse_highsnr(&ch, &sol.p1, &sol.p2, &sol.relays, &cfg).unwrap();
            assert!((obj - base_obj).abs() < 1e-9);
            assert!((energy(&parts.b1) - cfg.p_r_tilde1).abs() < 1e-9);
            assert!((energy(&parts.b2) - cfg.p_r_tilde2).abs() < 1e-9);
            assert!((energy(&sol.p1) - cfg.p_t1).abs() < 1e-9);
        }
        assert!(design_with_q(&ch, &cfg, &complex_gaussian(2, 2, 1.0, &mut rng), &CMat::identity(2, 2)).is_err());
    }

    #[test]
    fn fewer_streams_than_antennas() {
        let cfg = SystemConfig { n_s: 1, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ch = draw_channels(&cfg, &mut rng);
        let sol = design(&ch, &cfg).unwrap();
        assert_eq!(sol.p1.shape(), (2, 1));
        assert_eq!(sol.d2.shape(), (1, 2));
        let parts = sol.closed_form.unwrap();
        assert_eq!(parts.delta1.len(), 2);
        assert_eq!(parts.delta1[0], 0.0);
        assert!((energy(&parts.b1) - cfg.p_r_tilde1).abs() < 1e-9);
    }
}
