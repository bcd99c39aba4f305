//! Scalar power allocation.
//!
//! After the SVD structure is fixed, each link reduces to
//!
//! ```text
//! minimize    sum_l 1 / (1 + c_l z_l w_l)
//! subject to  sum_l z_l <= P_T,  sum_l w_l <= P_R,  z, w > 0
//! ```
//!
//! with `c_l = lambda_l(H)^2 / sigma2_n`. For fixed `w` the problem in `z` is
//! a separable convex water-filling problem (and vice versa), so we
//! alternate exact water-filling steps; the objective never increases. The
//! joint problem is nonconvex at low SNR, so every "strongest k streams"
//! support is tried and the best result kept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;
const BISECTION_MAX_ITER: usize = 200;
const KKT_TOL: f64 = 1e-11;

/// Gains and budgets of one link's allocation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarProblem {
    /// `c_l = lambda_l^2 / sigma2_n`, ascending.
    pub gains: Vec<f64>,
    pub p_t: f64,
    pub p_r_tilde: f64,
}

impl ScalarProblem {
    pub fn new(gains: Vec<f64>, p_t: f64, p_r_tilde: f64) -> Result<Self> {
        let prob = ScalarProblem { gains, p_t, p_r_tilde };
        prob.validate()?;
        Ok(prob)
    }

    /// Builds the problem for the link leaving a terminal whose first-hop
    /// singular values (ascending) are `singular_values`, received by a
    /// terminal with noise variance `sigma2_n`.
    pub fn from_singular_values(singular_values: &[f64], sigma2_n: f64, p_t: f64, p_r_tilde: f64) -> Result<Self> {
        let gains = singular_values.iter().map(|s| s * s / sigma2_n).collect();
        Self::new(gains, p_t, p_r_tilde)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gains.is_empty() {
            return Err(Error::contract("scalar problem needs at least one gain"));
        }
        if self.gains.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::contract("gains must be positive and finite"));
        }
        if self.gains.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::contract("gains must be ascending"));
        }
        if !(self.p_t > 0.0) || !(self.p_r_tilde > 0.0) {
            return Err(Error::contract("budgets must be positive"));
        }
        Ok(())
    }

    pub fn objective(&self, z: &[f64], w: &[f64]) -> f64 {
        self.gains
            .iter()
            .zip(z.iter().zip(w))
            .map(|(c, (z, w))| 1.0 / (1.0 + c * z * w))
            .sum()
    }
}

/// Per-stream transmit powers `z` and relayed powers `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every alternation (initial point first).
    pub trace: Vec<f64>,
}

/// Minimizes `sum_l 1 / (1 + c_l fixed_l x_l)` over `sum x <= budget, x >= 0`.
///
/// With `a_l = c_l fixed_l` the KKT conditions give
/// `x_l = max(0, t / sqrt(a_l) - 1 / a_l)` where `t = 1/sqrt(mu)` is set so the
/// budget binds. `t` is bracketed and bisected; once the active set is known
/// the level is solved exactly on it.
pub fn waterfill_inner(c: &[f64], fixed: &[f64], budget: f64) -> Result<Vec<f64>> {
    if c.len() != fixed.len() || c.is_empty() {
        return Err(Error::contract("waterfill: gain and fixed vectors must match and be non-empty"));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::contract("waterfill: budget must be positive"));
    }
    let a: Vec<f64> = c.iter().zip(fixed).map(|(c, f)| c * f).collect();
    if a.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::contract("waterfill: products c * fixed must be positive"));
    }

    let alloc = |t: f64| -> Vec<f64> { a.iter().map(|&ai| (t / ai.sqrt() - 1.0 / ai).max(0.0)).collect() };
    let used = |t: f64| -> f64 { alloc(t).iter().sum() };

    // With every entry active the sum is linear in t; that t over-covers the budget.
    let inv_sqrt: f64 = a.iter().map(|x| 1.0 / x.sqrt()).sum();
    let inv: f64 = a.iter().map(|x| 1.0 / x).sum();
    let mut hi = (budget + inv) / inv_sqrt;
    let mut lo = 0.0;

    let mut level = None;
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if used(mid) < budget {
            lo = mid;
        } else {
            hi = mid;
        }
        // Active set of the bracket midpoint, then the exact level on it.
        let active: Vec<usize> = (0..a.len()).filter(|&l| mid * a[l].sqrt() > 1.0).collect();
        if !active.is_empty() {
            let s1: f64 = active.iter().map(|&l| 1.0 / a[l].sqrt()).sum();
            let s0: f64 = active.iter().map(|&l| 1.0 / a[l]).sum();
            let t = (budget + s0) / s1;
            if (used(t) - budget).abs() <= 1e-12 * budget {
                level = Some(t);
                break;
            }
        }
        if hi - lo <= f64::EPSILON * hi {
            level = Some(hi);
            break;
        }
    }
    let t = level.ok_or_else(|| Error::numeric("water-filling bisection did not converge"))?;
    let x = alloc(t);
    let residual = (x.iter().sum::<f64>() - budget).abs();
    if residual > 1e-10 * budget {
        return Err(Error::numeric(format!(
            "water-filling budget residual {residual:e} too large"
        )));
    }
    Ok(x)
}

// Keeps iterates strictly inside the positive orthant.
fn clamp_positive(x: &mut [f64], budget: f64) {
    let eps = 1e-12 * budget;
    if x.iter().any(|v| *v < eps) {
        for v in x.iter_mut() {
            if *v < eps {
                *v = eps;
            }
        }
        let s: f64 = x.iter().sum();
        for v in x.iter_mut() {
            *v *= budget / s;
        }
    }
}

/// Global minimizer of the scalar problem.
///
/// The objective is not jointly convex when `c z w < 1/3`, and at low SNR the
/// best allocation can leave weak streams (numerically) off. Swapping powers
/// toward a stronger stream never hurts, so an optimal support is always the
/// `k` strongest streams. Each such support is solved by alternating exact
/// water-filling from the uniform allocation; inactive entries are held at
/// `1e-12` of the budget and the best candidate is returned.
pub fn solve_pair(prob: &ScalarProblem, tol: f64, max_iter: usize) -> Result<PowerAllocation> {
    prob.validate()?;
    let n = prob.gains.len();
    let mut best: Option<PowerAllocation> = None;
    for k in (1..=n).rev() {
        let sub = ScalarProblem {
            gains: prob.gains[n - k..].to_vec(),
            p_t: prob.p_t,
            p_r_tilde: prob.p_r_tilde,
        };
        let mut cand = alternate(&sub, tol, max_iter)?;
        if k < n {
            let mut z = vec![0.0; n - k];
            z.extend_from_slice(&cand.z);
            let mut w = vec![0.0; n - k];
            w.extend_from_slice(&cand.w);
            clamp_positive(&mut z, prob.p_t);
            clamp_positive(&mut w, prob.p_r_tilde);
            cand.objective = prob.objective(&z, &w);
            let offset = (n - k) as f64;
            cand.trace.iter_mut().for_each(|v| *v += offset);
            cand.z = z;
            cand.w = w;
        }
        if best.as_ref().is_none_or(|b| cand.objective < b.objective) {
            best = Some(cand);
        }
    }
    Ok(best.expect("at least one support"))
}

// Alternating exact water-filling on `z` and `w` from the uniform allocation,
// until the relative objective change drops below `tol` and the projected
// gradient has vanished.
fn alternate(prob: &ScalarProblem, tol: f64, max_iter: usize) -> Result<PowerAllocation> {
    let n = prob.gains.len();
    let mut z = vec![prob.p_t / n as f64; n];
    let mut w = vec![prob.p_r_tilde / n as f64; n];
    let mut obj = prob.objective(&z, &w);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut z_next = waterfill_inner(&prob.gains, &w, prob.p_t)?;
        clamp_positive(&mut z_next, prob.p_t);
        let mut w_next = waterfill_inner(&prob.gains, &z_next, prob.p_r_tilde)?;
        clamp_positive(&mut w_next, prob.p_r_tilde);
        let next = prob.objective(&z_next, &w_next);
        // The clamp can nudge the objective up by ~1e-12; never accept that.
        if next > obj {
            converged = true;
            break;
        }
        z = z_next;
        w = w_next;
        let change = (obj - next).abs() / obj.abs().max(f64::MIN_POSITIVE);
        obj = next;
        trace.push(obj);
        // Linear convergence: the objective settles before the gradient does.
        if change < tol && kkt_residual(prob, &z, &w) < KKT_TOL {
            converged = true;
            break;
        }
    }

    Ok(PowerAllocation {
        z,
        w,
        objective: obj,
        iterations,
        converged,
        trace,
    })
}

pub fn solve_pair_default(prob: &ScalarProblem) -> Result<PowerAllocation> {
    solve_pair(prob, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Per-index check of `z_l w_l >= sigma2_n / (3 lambda_l^2)`, the region where
/// each objective term is jointly convex in `(z_l, w_l)`.
pub fn check_convexity_condition(z: &[f64], w: &[f64], lambda_sq: &[f64], sigma2_n: f64) -> Vec<bool> {
    z.iter()
        .zip(w)
        .zip(lambda_sq)
        .map(|((z, w), l)| 3.0 * z * w * l >= sigma2_n)
        .collect()
}

/// Norm of the projected gradient at `(z, w)` on the planes `sum z = P_T`,
/// `sum w = P_R` (both budgets bind at the optimum).
pub fn kkt_residual(prob: &ScalarProblem, z: &[f64], w: &[f64]) -> f64 {
    let n = prob.gains.len() as f64;
    let denom = |l: usize| (1.0 + prob.gains[l] * z[l] * w[l]).powi(2);
    let gz: Vec<f64> = (0..z.len()).map(|l| -prob.gains[l] * w[l] / denom(l)).collect();
    let gw: Vec<f64> = (0..w.len()).map(|l| -prob.gains[l] * z[l] / denom(l)).collect();
    let mz = gz.iter().sum::<f64>() / n;
    let mw = gw.iter().sum::<f64>() / n;
    gz.iter()
        .map(|g| (g - mz).powi(2))
        .chain(gw.iter().map(|g| (g - mw).powi(2)))
        .sum::<f64>()
        .sqrt()
}

/// Brute-force reference solutions.
pub mod oracle {
    use super::ScalarProblem;

    /// Exhaustive search over both simplices for two streams (budgets binding,
    /// endpoints included), step `step` of the normalized split. Returns `(objective, z_1/P_T, w_1/P_R)`.
    pub fn grid_two_streams(prob: &ScalarProblem, step: f64) -> (f64, f64, f64) {
        assert_eq!(prob.gains.len(), 2);
        let n = (1.0 / step).round() as usize;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=n {
            let a = i as f64 * step;
            let z = [a * prob.p_t, (1.0 - a) * prob.p_t];
            for j in 0..=n {
                let b = j as f64 * step;
                let w = [b * prob.p_r_tilde, (1.0 - b) * prob.p_r_tilde];
                let f = prob.objective(&z, &w);
                if f < best.0 {
                    best = (f, a, b);
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn low_snr_switches_off_weak_stream() {
        let prob = ScalarProblem::new(vec![3.103, 7.650], 1.211, 0.408).unwrap();
        let sol = solve_pair_default(&prob).unwrap();
        let (best, _, _) = oracle::grid_two_streams(&prob, 1e-3);
        assert!(sol.objective <= best + 1e-4, "{} vs {best}", sol.objective);
        assert!(sol.z[0] < 1e-9 * prob.p_t);
    }

    #[test]
    fn waterfill_symmetric() {
        let x = waterfill_inner(&[1.0, 1.0], &[1.0, 1.0], 2.0).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn waterfill_hand_solved() {
        // (1 + a x)^2 = a / mu with a = (4, 1): x1 = t/2 - 1/4, x2 = t - 1,
        // budget 1.5 gives t = 11/6.
        let x = waterfill_inner(&[4.0, 1.0], &[1.0, 1.0], 1.5).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((x[1] - 5.0 / 6.0).abs() < 1e-12);
        // Same a via c * fixed.
        let y = waterfill_inner(&[2.0, 0.5], &[2.0, 2.0], 1.5).unwrap();
        assert!((y[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn waterfill_hand_solved_matches_grid() {
        let f = |x: f64| 1.0 / (1.0 + 4.0 * x) + 1.0 / (1.0 + (1.5 - x));
        let best = (0..=150_000)
            .map(|i| i as f64 * 1e-5)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        assert!((best - 2.0 / 3.0).abs() < 2e-5);
    }

    #[test]
    fn waterfill_leaves_weak_entry_inactive() {
        let x = waterfill_inner(&[100.0, 1e-4], &[1.0, 1.0], 0.1).unwrap();
        assert_eq!(x[1], 0.0);
        assert!((x[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn waterfill_rejects_bad_input() {
        assert!(waterfill_inner(&[1.0], &[0.0], 1.0).is_err());
        assert!(waterfill_inner(&[1.0], &[1.0], 0.0).is_err());
        assert!(waterfill_inner(&[1.0, 2.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn pair_fully_symmetric() {
        let prob = ScalarProblem::new(vec![1.0, 1.0], 2.0, 2.0).unwrap();
        let a = solve_pair_default(&prob).unwrap();
        for v in a.z.iter().chain(&a.w) {
            assert!((v - 1.0).abs() < 1e-9);
        }
        assert!((a.objective - 1.0).abs() < 1e-12);
        assert!(a.converged);
    }

    #[test]
    fn pair_single_stream() {
        let prob = ScalarProblem::new(vec![10.0], 1.0, 2.0).unwrap();
        let a = solve_pair_default(&prob).unwrap();
        assert!((a.z[0] - 1.0).abs() < 1e-12);
        assert!((a.w[0] - 2.0).abs() < 1e-12);
        assert!((a.objective - 1.0 / 21.0).abs() < 1e-14);
    }

    #[test]
    fn pair_matches_grid_oracle() {
        let prob = ScalarProblem::new(vec![1.0, 4.0], 2.0, 1.0).unwrap();
        let a = solve_pair_default(&prob).unwrap();
        let (best, _, _) = oracle::grid_two_streams(&prob, 1e-3);
        assert!(a.objective <= best + 1e-4);
        assert!((a.objective - best).abs() < 1e-4);
    }

    #[test]
    fn pair_random_problems_against_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let mut gains = vec![rng.random_range(0.1..20.0), rng.random_range(0.1..20.0)];
            gains.sort_by(f64::total_cmp);
            let prob = ScalarProblem::new(gains, rng.random_range(0.2..10.0), rng.random_range(0.2..10.0)).unwrap();
            let a = solve_pair_default(&prob).unwrap();
            let (best, _, _) = oracle::grid_two_streams(&prob, 1e-3);
            assert!(a.objective <= best + 1e-4, "{prob:?}: {} vs {best}", a.objective);
        }
    }

    #[test]
    fn pair_descent_budgets_and_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.random_range(1..6);
            let mut gains: Vec<f64> = (0..n).map(|_| rng.random_range(2.0..50.0)).collect();
            gains.sort_by(f64::total_cmp);
            let prob = ScalarProblem::new(gains.clone(), rng.random_range(1.0..20.0), rng.random_range(1.0..20.0)).unwrap();
            let a = solve_pair_default(&prob).unwrap();
            assert!(a.trace.windows(2).all(|t| t[1] <= t[0]));
            assert!(a.z.iter().chain(&a.w).all(|v| *v > 0.0));
            let sz: f64 = a.z.iter().sum();
            let sw: f64 = a.w.iter().sum();
            assert!((sz - prob.p_t).abs() <= 1e-9 * prob.p_t);
            assert!((sw - prob.p_r_tilde).abs() <= 1e-9 * prob.p_r_tilde);
            let convex = check_convexity_condition(&a.z, &a.w, &gains, 1.0);
            if convex.iter().all(|b| *b) {
                let r = kkt_residual(&prob, &a.z, &a.w);
                assert!(r < 1e-8, "kkt residual {r} for {prob:?}");
            }
        }
    }

    #[test]
    fn max_iter_exhaustion_flags_non_convergence() {
        let prob = ScalarProblem::new(vec![0.5, 30.0], 1.0, 3.0).unwrap();
        let a = solve_pair(&prob, 0.0, 1).unwrap();
        assert_eq!(a.iterations, 1);
        assert!(!a.converged || a.trace.len() == 1);
    }

    #[test]
    fn convexity_condition_boundary() {
        // z w lambda^2 / sigma^2 = 1/3 exactly.
        assert_eq!(check_convexity_condition(&[1.0], &[1.0], &[1.0], 3.0), vec![true]);
        assert_eq!(check_convexity_condition(&[1.0], &[1.0], &[1.0], 1.0), vec![true]);
        assert_eq!(check_convexity_condition(&[0.1], &[0.1], &[1.0], 1.0), vec![false]);
    }

    #[test]
    fn convexity_holds_at_solution_for_strong_gains() {
        let prob = ScalarProblem::new(vec![40.0, 90.0], 2.0, 2.0).unwrap();
        let a = solve_pair_default(&prob).unwrap();
        assert!(check_convexity_condition(&a.z, &a.w, &prob.gains, 1.0).iter().all(|b| *b));
    }

    #[test]
    fn problem_validation() {
        assert!(ScalarProblem::new(vec![2.0, 1.0], 1.0, 1.0).is_err());
        assert!(ScalarProblem::new(vec![0.0, 1.0], 1.0, 1.0).is_err());
        assert!(ScalarProblem::new(vec![1.0], -1.0, 1.0).is_err());
        assert!(ScalarProblem::new(vec![], 1.0, 1.0).is_err());
    }
}
