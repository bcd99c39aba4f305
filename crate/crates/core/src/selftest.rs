//! Fast invariant checks for `twr selftest`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{draw_channels, SystemConfig, Terminal};
use crate::design::design;
use crate::error::Error;
use crate::harness::{run_trial, Algorithm, RelayMode};
use crate::linalg::{
    complex_gaussian, evd_hermitian_ascending, hpd_solve, pinv_default, svd_ascending, svd_ascending_thin, CMat,
    SvdAscending,
};
use crate::power::{oracle, solve_pair_default, waterfill_inner, ScalarProblem};

/// Deliberate defects used to confirm that the suite catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Singular values come back in descending order.
    SvdOrdering,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "svd-ordering" => Ok(Fault::SvdOrdering),
            _ => Err(Error::InvalidConfig(format!("unknown fault '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct SelftestReport {
    pub checks: Vec<CheckOutcome>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "{tag} {:<24} {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

fn reverse_order(svd: &SvdAscending) -> SvdAscending {
    let k = svd.sigma.len();
    let flip = |m: &CMat| {
        let mut out = m.clone();
        let off = m.ncols() - k;
        for j in 0..k {
            out.set_column(off + j, &m.column(off + k - 1 - j));
        }
        out
    };
    SvdAscending {
        u: flip(&svd.u),
        sigma: svd.sigma.iter().rev().copied().collect(),
        v: flip(&svd.v),
    }
}

fn unitary_defect(m: &CMat) -> f64 {
    (m.adjoint() * m - CMat::identity(m.ncols(), m.ncols())).norm()
}

type Check = Result<String, String>;

fn check(name: &'static str, f: impl FnOnce() -> Check) -> CheckOutcome {
    match f() {
        Ok(detail) => CheckOutcome { name, passed: true, detail },
        Err(detail) => CheckOutcome { name, passed: false, detail },
    }
}

fn test_matrices() -> Vec<CMat> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    [(4, 2), (8, 2), (3, 3), (2, 6), (16, 4)]
        .iter()
        .map(|&(r, c)| complex_gaussian(r, c, 1.0, &mut rng))
        .collect()
}

pub fn run_selftest(fault: Option<Fault>) -> SelftestReport {
    let mats = test_matrices();
    let svds: Vec<SvdAscending> = mats
        .iter()
        .map(|m| {
            let s = svd_ascending_thin(m).expect("svd of a random matrix");
            if fault == Some(Fault::SvdOrdering) {
                reverse_order(&s)
            } else {
                s
            }
        })
        .collect();
    let mut checks = Vec::new();

    checks.push(check("svd-ascending-order", || {
        for (i, s) in svds.iter().enumerate() {
            if s.sigma.windows(2).any(|w| w[0] > w[1]) {
                return Err(format!("matrix {i}: singular values not ascending: {:?}", s.sigma));
            }
        }
        Ok(format!("{} matrices", svds.len()))
    }));

    checks.push(check("svd-reconstruction", || {
        let mut worst: f64 = 0.0;
        for (m, s) in mats.iter().zip(&svds) {
            let rel = (s.reconstruct() - m).norm() / m.norm();
            let orth = unitary_defect(&s.u).max(unitary_defect(&s.v));
            worst = worst.max(rel).max(orth);
        }
        if worst <= 1e-10 {
            Ok(format!("max defect {worst:.1e}"))
        } else {
            Err(format!("max defect {worst:.1e} > 1e-10"))
        }
    }));

    checks.push(check("svd-full-unitary", || {
        let mut worst: f64 = 0.0;
        for m in &mats {
            let s = svd_ascending(m).map_err(|e| e.to_string())?;
            worst = worst.max(unitary_defect(&s.u)).max(unitary_defect(&s.v));
        }
        if worst <= 1e-10 {
            Ok(format!("max defect {worst:.1e}"))
        } else {
            Err(format!("max defect {worst:.1e} > 1e-10"))
        }
    }));

    checks.push(check("evd-hermitian", || {
        for m in &mats {
            let a = m * m.adjoint();
            let (v, lambda) = evd_hermitian_ascending(&a).map_err(|e| e.to_string())?;
            if lambda.windows(2).any(|w| w[0] > w[1]) {
                return Err(format!("eigenvalues not ascending: {lambda:?}"));
            }
            let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
                lambda.len(),
                lambda.iter().map(|&x| crate::C64::new(x, 0.0)),
            ));
            let rel = (&v * d * v.adjoint() - &a).norm() / a.norm();
            if rel > 1e-10 {
                return Err(format!("reconstruction defect {rel:.1e}"));
            }
        }
        Ok("ascending, reconstructs".into())
    }));

    checks.push(check("pinv-penrose", || {
        for m in &mats {
            let x = pinv_default(m).map_err(|e| e.to_string())?;
            let scale = m.norm() * x.norm();
            let defects = [
                (m * &x * m - m).norm() / m.norm(),
                (&x * m * &x - &x).norm() / x.norm(),
                ((m * &x).adjoint() - m * &x).norm() / scale,
                ((&x * m).adjoint() - &x * m).norm() / scale,
            ];
            if let Some(d) = defects.iter().find(|&&d| d > 1e-10) {
                return Err(format!("Penrose condition defect {d:.1e}"));
            }
        }
        Ok("four conditions".into())
    }));

    checks.push(check("hpd-solve", || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = complex_gaussian(4, 4, 1.0, &mut rng);
        let a = &x * x.adjoint() + CMat::identity(4, 4);
        let b = complex_gaussian(4, 2, 1.0, &mut rng);
        let sol = hpd_solve(&a, &b).map_err(|e| e.to_string())?;
        let rel = (&a * sol - &b).norm() / b.norm();
        if rel <= 1e-12 {
            Ok(format!("residual {rel:.1e}"))
        } else {
            Err(format!("residual {rel:.1e} > 1e-12"))
        }
    }));

    checks.push(check("allocation-hand-case", || {
        let x = waterfill_inner(&[4.0, 1.0], &[1.0, 1.0], 1.5).map_err(|e| e.to_string())?;
        let err = (x[0] - 2.0 / 3.0).abs().max((x[1] - 5.0 / 6.0).abs());
        if err <= 1e-6 {
            Ok(format!("error {err:.1e}"))
        } else {
            Err(format!("got {x:?}, expected (2/3, 5/6)"))
        }
    }));

    checks.push(check("allocation-oracle", || {
        let instances = [([0.5, 3.0], 2.0, 5.0), ([1.0, 1.2], 1.0, 1.0), ([0.05, 8.0], 10.0, 3.0)];
        let mut worst = f64::NEG_INFINITY;
        for (gains, p_t, p_r) in instances {
            let prob = ScalarProblem::new(gains.to_vec(), p_t, p_r).map_err(|e| e.to_string())?;
            let sol = solve_pair_default(&prob).map_err(|e| e.to_string())?;
            let (best, _, _) = oracle::grid_two_streams(&prob, 1e-3);
            if sol.objective > best + 1e-4 {
                return Err(format!("objective {} vs grid {best}", sol.objective));
            }
            worst = worst.max(sol.objective - best);
        }
        Ok(format!("3 instances, max solver - grid {worst:.1e}"))
    }));

    checks.push(check("design-constraints", || {
        let cfg = SystemConfig {
            n_c: 3,
            p_t1: 3.0,
            p_t2: 5.0,
            p_r_tilde1: 7.0,
            p_r_tilde2: 2.0,
            ..SystemConfig::default()
        };
        let ch = draw_channels(&cfg, &mut ChaCha8Rng::seed_from_u64(21));
        let sol = design(&ch, &cfg).map_err(|e| e.to_string())?;
        let cf = sol.closed_form.as_ref().ok_or("missing closed-form parts")?;
        for t in Terminal::BOTH {
            if sol.p(t).norm_squared() > cfg.p_t(t) * (1.0 + 1e-9) {
                return Err(format!("precoder {t:?} exceeds its budget"));
            }
            if cf.b(t).norm_squared() > cfg.p_r_tilde(t) * (1.0 + 1e-9) {
                return Err(format!("relay target {t:?} exceeds its budget"));
            }
        }
        for (k, f) in sol.relays.iter().enumerate() {
            let target = CMat::from_fn(2 * cfg.n_t, cfg.n_r, |r, c| {
                let b = if r < cfg.n_t { &cf.b1 } else { &cf.b2 };
                b[(r % cfg.n_t, k * cfg.n_r + c)]
            });
            let rel = (ch.stacked_second_hop(k) * f - &target).norm() / target.norm();
            if rel > 1e-9 {
                return Err(format!("relay {k}: equation residual {rel:.1e}"));
            }
        }
        Ok("budgets and relay equations hold".into())
    }));

    checks.push(check("noiseless-recovery", || {
        let cfg = SystemConfig {
            sigma2_w: 1e-12,
            sigma2_n1: 1e-12,
            sigma2_n2: 1e-12,
            ..SystemConfig::default()
        };
        let out = run_trial(&cfg, 10.0, Algorithm::Proposed, 0, 1, 10_000, RelayMode::Designed)
            .map_err(|e| e.to_string())?;
        if out.bit_errors == 0 {
            Ok(format!("0 errors in {} bits", out.bits))
        } else {
            Err(format!("{} errors in {} bits", out.bit_errors, out.bits))
        }
    }));

    SelftestReport { checks }
}
