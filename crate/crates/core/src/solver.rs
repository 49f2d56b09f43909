//! Inversion of the step operator by semismooth Newton on its strongly convex
//! energy, with Armijo backtracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{self, GridFunction};
use crate::operator::{self, OperatorContext};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Target for the discrete L² norm of `A(u) - rhs`.
    pub tol_residual: f64,
    pub max_newton: usize,
    pub max_backtracks: usize,
    pub backtrack_factor: f64,
    pub sufficient_decrease: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol_residual: 1e-10, max_newton: 50, max_backtracks: 40, backtrack_factor: 0.5, sufficient_decrease: 1e-4 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual.is_finite() && self.tol_residual > 0.0) {
            return Err(Error::invalid("tol_residual", "must be positive"));
        }
        if self.max_newton == 0 {
            return Err(Error::invalid("max_newton", "must be at least 1"));
        }
        if self.max_backtracks == 0 {
            return Err(Error::invalid("max_backtracks", "must be at least 1"));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::invalid("backtrack_factor", "must lie in (0, 1)"));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 0.5) {
            return Err(Error::invalid("sufficient_decrease", "must lie in (0, 1/2)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    pub converged: bool,
    /// Iterations that fell back to the steepest descent direction.
    pub descent_fallbacks: usize,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

struct Iterate {
    u: GridFunction,
    residual: GridFunction,
    res_norm: f64,
    energy: f64,
}

impl Iterate {
    fn new(ctx: &OperatorContext, u: GridFunction, rhs: &GridFunction) -> Self {
        let residual = operator::residual(ctx, &u, rhs);
        let res_norm = mesh::norm_l2(&residual);
        let energy = operator::energy(ctx, &u, rhs);
        Self { u, residual, res_norm, energy }
    }
}

/// Energy change below which rounding dominates the Armijo comparison.
fn energy_noise(it: &Iterate, rhs: &GridFunction) -> f64 {
    let scale = 1.0 + it.energy.abs() + mesh::inner(&it.u, &it.u) + mesh::inner(&it.u, rhs).abs();
    1e-12 * scale
}

/// Backtracks along `dir`; returns the accepted iterate, if any.
fn line_search(
    ctx: &OperatorContext,
    rhs: &GridFunction,
    cur: &Iterate,
    dir: &GridFunction,
    cfg: &SolverConfig,
) -> Option<Iterate> {
    let slope = mesh::inner(&cur.residual, dir);
    if !(slope < 0.0) {
        return None;
    }
    let noise = energy_noise(cur, rhs);
    let mut alpha = 1.0;
    for _ in 0..cfg.max_backtracks {
        let trial = Iterate::new(ctx, cur.u.axpy(alpha, dir), rhs);
        if trial.energy.is_finite() {
            let armijo = trial.energy <= cur.energy + cfg.sufficient_decrease * alpha * slope;
            // Close to the solution the predicted decrease drops below the
            // energy's rounding level; accept on residual decrease instead.
            let flat = trial.energy - cur.energy <= noise && trial.res_norm < cur.res_norm;
            if armijo || flat {
                return Some(trial);
            }
        }
        alpha *= cfg.backtrack_factor;
    }
    None
}

/// Solves `A(u) = rhs` starting from `guess`.
pub fn solve(
    ctx: &OperatorContext,
    rhs: &GridFunction,
    guess: &GridFunction,
    cfg: &SolverConfig,
) -> Result<(GridFunction, SolveReport)> {
    let mut cur = Iterate::new(ctx, guess.clone(), rhs);
    let mut report = SolveReport {
        iterations: 0,
        residual_history: vec![cur.res_norm],
        energy_history: vec![cur.energy],
        converged: false,
        descent_fallbacks: 0,
    };
    while cur.res_norm > cfg.tol_residual {
        if report.iterations == cfg.max_newton {
            return Err(Error::NonConvergence { iterations: report.iterations, residual: cur.res_norm });
        }
        let jac = operator::jacobian(ctx, &cur.u);
        let neg_res: Vec<f64> = cur.residual.values().iter().map(|r| -r).collect();
        let newton = jac
            .solve(&neg_res)
            .ok()
            .and_then(|d| GridFunction::new(*ctx.grid(), d).ok())
            .and_then(|d| line_search(ctx, rhs, &cur, &d, cfg));
        let next = match newton {
            Some(next) => next,
            None => {
                report.descent_fallbacks += 1;
                let steepest = cur.residual.scaled(-1.0);
                match line_search(ctx, rhs, &cur, &steepest, cfg) {
                    Some(next) => next,
                    None => {
                        return Err(Error::NonConvergence { iterations: report.iterations, residual: cur.res_norm })
                    }
                }
            }
        };
        cur = next;
        report.iterations += 1;
        report.residual_history.push(cur.res_norm);
        report.energy_history.push(cur.energy);
    }
    report.converged = true;
    Ok((cur.u, report))
}

/// Measured sides of the two stability inequalities for a pair of solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityBounds {
    /// `|sol1 - sol2|` vs `|rhs1 - rhs2| / (1 - tau L_beta)`.
    pub l2_lhs: f64,
    pub l2_bound: f64,
    /// `tau C(p) |sol1 - sol2|_V^p` vs `|rhs1 - rhs2| |sol1 - sol2|`.
    pub v_lhs: f64,
    pub v_bound: f64,
    pub bound_l2: bool,
    pub bound_v: bool,
}

pub const STABILITY_SLACK: f64 = 1e-8;

pub fn stability_bounds(
    ctx: &OperatorContext,
    rhs1: &GridFunction,
    rhs2: &GridFunction,
    sol1: &GridFunction,
    sol2: &GridFunction,
) -> StabilityBounds {
    let p = ctx.p();
    let drhs = mesh::norm_l2(&rhs1.sub(rhs2));
    let dsol_field = sol1.sub(sol2);
    let dsol = mesh::norm_l2(&dsol_field);
    let l2_bound = drhs / ctx.params().margin();
    let v_lhs = ctx.tau() * operator::monotonicity_constant(p) * mesh::norm_v_p_unchecked(&dsol_field, p);
    let v_bound = drhs * dsol;
    StabilityBounds {
        l2_lhs: dsol,
        l2_bound,
        v_lhs,
        v_bound,
        bound_l2: dsol <= l2_bound + STABILITY_SLACK,
        bound_v: v_lhs <= v_bound + STABILITY_SLACK,
    }
}

/// `(|sol|_V^p, |rhs|^2 / (4 tau (1 - tau L_beta)))`.
pub fn apriori_bound(ctx: &OperatorContext, rhs: &GridFunction, sol: &GridFunction) -> (f64, f64) {
    let lhs = mesh::norm_v_p_unchecked(sol, ctx.p());
    let r = mesh::norm_l2(rhs);
    (lhs, r * r / (4.0 * ctx.tau() * ctx.params().margin()))
}

pub fn apriori_bound_check(ctx: &OperatorContext, rhs: &GridFunction, sol: &GridFunction) -> bool {
    let (lhs, bound) = apriori_bound(ctx, rhs, sol);
    lhs <= bound + STABILITY_SLACK
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid1D;
    use crate::model::{ModelParams, ReactionSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx(p: f64, tau: f64, eps: f64, reaction: ReactionSpec, n: usize) -> OperatorContext {
        let params = ModelParams::new(p, eps, tau, 1, reaction.lipschitz(), 1.0).unwrap();
        OperatorContext::new(params, reaction, Grid1D::new(n, 1.0).unwrap()).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, g: Grid1D, lo: f64, hi: f64) -> GridFunction {
        GridFunction::new(g, (0..g.n_cells()).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    }

    /// Root of `u + tau u^3 = c` by bisection.
    fn cubic_root(tau: f64, c: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, c);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + tau * mid.powi(3) > c {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { tol_residual: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { max_newton: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn constant_solution_p2() {
        let tau = 0.1;
        let c = ctx(2.0, tau, 0.1, ReactionSpec::zero(), 16);
        let rhs = GridFunction::constant(*c.grid(), 0.8);
        let (u, rep) = solve(&c, &rhs, &GridFunction::zeros(*c.grid()), &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        for v in u.values() {
            assert!((v - 0.8 / 1.1).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_solution_p4_matches_bisection() {
        let c = ctx(4.0, 0.1, 0.1, ReactionSpec::zero(), 16);
        let rhs = GridFunction::constant(*c.grid(), 0.5);
        let (u, _) = solve(&c, &rhs, &GridFunction::zeros(*c.grid()), &SolverConfig::default()).unwrap();
        let root = cubic_root(0.1, 0.5);
        // Independent value from a bracketing root finder: 0.48835331272856514.
        assert!((root - 0.488_353_312_728_565).abs() < 1e-12);
        for v in u.values() {
            assert!((v - root).abs() < 1e-10);
        }
    }

    #[test]
    fn round_trip_recovers_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for p in [2.0, 3.0, 4.0] {
            let c = ctx(p, 0.01, 0.05, ReactionSpec::sine(50.0), 24);
            let g = *c.grid();
            let w = random_field(&mut rng, g, -0.3, 1.3);
            let rhs = operator::apply_a(&c, &w);
            let (u, rep) = solve(&c, &rhs, &GridFunction::zeros(g), &SolverConfig::default()).unwrap();
            assert!(mesh::norm_l2(&u.sub(&w)) <= 1e-8, "p {p}: {:?}", rep.residual_history);
        }
    }

    #[test]
    fn energy_history_nonincreasing_and_unique() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = ctx(3.0, 0.05, 0.02, ReactionSpec::linear(10.0), 32);
        let g = *c.grid();
        for _ in 0..10 {
            let rhs = random_field(&mut rng, g, -1.0, 2.0);
            let (a, rep) = solve(&c, &rhs, &GridFunction::zeros(g), &SolverConfig::default()).unwrap();
            for w in rep.energy_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "{:?}", rep.energy_history);
            }
            let start = random_field(&mut rng, g, -5.0, 5.0);
            let (b, _) = solve(&c, &rhs, &start, &SolverConfig::default()).unwrap();
            assert!(mesh::norm_l2(&a.sub(&b)) <= 1e-8);
        }
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let c = ctx(4.0, 0.1, 0.01, ReactionSpec::zero(), 16);
        let rhs = GridFunction::from_fn(*c.grid(), |x| 3.0 * x - 1.0);
        let cfg = SolverConfig { max_newton: 1, tol_residual: 1e-14, ..Default::default() };
        match solve(&c, &rhs, &GridFunction::zeros(*c.grid()), &cfg) {
            Err(Error::NonConvergence { iterations, .. }) => assert_eq!(iterations, 1),
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let c = ctx(3.0, 0.1, 0.1, ReactionSpec::sine(2.0), 10);
        let z = GridFunction::zeros(*c.grid());
        let (u, rep) = solve(&c, &z, &z, &SolverConfig::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(apriori_bound_check(&c, &z, &u));
        let s = stability_bounds(&c, &z, &z, &u, &u);
        assert!(s.bound_l2 && s.bound_v);
        assert_eq!(s.l2_lhs, 0.0);
    }

    #[test]
    fn report_serializes() {
        let rep = SolveReport { iterations: 2, residual_history: vec![1.0, 0.5], energy_history: vec![0.0, -1.0], converged: true, descent_fallbacks: 0 };
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("\"residual_history\":[1.0,0.5]"));
    }
}
