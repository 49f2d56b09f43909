//! Aggregated property report. Every inequality and structural invariant of
//! the discrete scheme is evaluated on sampled inputs and recorded with its
//! measured value, the bound it is compared to, and the remaining slack.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::mesh::{self, Grid1D, GridFunction};
use crate::model::{
    psi_eps, psi_eps_antiderivative, InitialDatum, ModelParams, ReactionKind, ReactionSpec,
};
use crate::noise::{apply_diffusion, bump, hs_lipschitz_estimate, sample_path, NoiseModel};
use crate::operator::{self, OperatorContext, TridiagonalMatrix};
use crate::solver;
use crate::stepper::{self, Problem, StorageMode};

use super::estimate_cp;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub property: String,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
    /// Distance to failure: positive when the property holds with room.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageItem {
    pub module: String,
    pub invariant: String,
    pub property: String,
    pub checked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<PropertyCheck>,
    pub coverage: Vec<CoverageItem>,
}

impl VerifyReport {
    pub fn check(&self, property: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.property == property)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Sample sizes and fault injection for [`verify_all`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifySettings {
    pub seed: u64,
    /// Random fields (or pairs) per (p, tau L_beta) combination.
    pub inequality_trials: usize,
    /// Random right-hand sides per exponent in the solver checks.
    pub solve_trials: usize,
    pub cp_samples: usize,
    pub noise_draws: usize,
    pub hs_samples: usize,
    /// Multiplies the monotonicity constant; values above 1 inject a fault.
    pub cp_scale: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            seed: 20_240_911,
            inequality_trials: 1000,
            solve_trials: 100,
            cp_samples: 1_000_000,
            noise_draws: 1_000_000,
            hs_samples: 100_000,
            cp_scale: 1.0,
        }
    }
}

/// (module, invariant, property id)
const CHECKLIST: &[(&str, &str, &str)] = &[
    ("mesh", "summation by parts", "mesh.summation_by_parts"),
    ("mesh", "V norm at p = 2 splits into L2 and gradient parts", "mesh.v_norm_p2_identity"),
    ("mesh", "norms are absolutely homogeneous", "mesh.homogeneity"),
    ("model", "psi_eps monotone", "model.psi_monotone"),
    ("model", "psi_eps is 1/eps-Lipschitz", "model.psi_lipschitz"),
    ("model", "psi_eps vanishes on [0,1]", "model.psi_vanishes_on_box"),
    ("model", "potential derivative equals psi_eps", "model.psi_potential_fd"),
    ("model", "reaction antiderivative derivative equals beta", "model.reaction_potential_fd"),
    ("model", "parameter gate rejects tau L_beta >= 1 and p < 2", "model.params_gate"),
    ("noise", "support of the diffusion", "noise.diffusion_support"),
    ("noise", "truncation consistency", "noise.truncation_consistency"),
    ("noise", "reproducibility from seed", "noise.reproducibility"),
    ("noise", "Hilbert-Schmidt Lipschitz bound", "noise.hs_lipschitz"),
    ("noise", "increment mean", "noise.increment_mean"),
    ("noise", "increment variance", "noise.increment_variance"),
    ("operator", "coercivity", "operator.coercivity"),
    ("operator", "strong monotonicity", "operator.strong_monotonicity"),
    ("operator", "p-Laplacian weak form", "operator.plap_weak_form"),
    ("operator", "continuity", "operator.continuity"),
    ("operator", "Jacobian matches directional derivatives", "operator.jacobian_fd"),
    ("operator", "Jacobian symmetric positive definite", "operator.jacobian_min_eigenvalue"),
    ("solver", "uniqueness", "solver.uniqueness"),
    ("solver", "energy nonincreasing", "solver.energy_nonincreasing"),
    ("solver", "convergence within max_newton", "solver.convergence"),
    ("solver", "determinism", "solver.determinism"),
    ("solver", "L2 stability of the inverse", "solver.stability_l2"),
    ("solver", "V stability of the inverse", "solver.stability_v"),
    ("solver", "a priori bound", "solver.apriori_bound"),
    ("solver", "Lipschitz response to perturbations", "solver.perturbation_slope"),
    ("stepper", "scheme residual", "stepper.scheme_residual"),
    ("stepper", "noise-off consistency", "stepper.noise_off_consistency"),
    ("stepper", "warm-start equivalence", "stepper.warm_start_equivalence"),
    ("harness", "monotonicity constant estimate", "harness.cp_estimate"),
];

const INEQUALITY_SLACK: f64 = 1e-10;

struct Recorder {
    checks: Vec<PropertyCheck>,
}

impl Recorder {
    /// Passes when `measured <= bound`.
    fn at_most(&mut self, property: &str, measured: f64, bound: f64) {
        let slack = bound - measured;
        self.checks.push(PropertyCheck { property: property.into(), passed: slack >= 0.0, measured, bound, slack });
    }

    /// Passes when `measured >= bound`.
    fn at_least(&mut self, property: &str, measured: f64, bound: f64) {
        let slack = measured - bound;
        self.checks.push(PropertyCheck { property: property.into(), passed: slack >= 0.0, measured, bound, slack });
    }
}

fn random_field(rng: &mut ChaCha8Rng, grid: Grid1D, lo: f64, hi: f64) -> GridFunction {
    GridFunction::from_vec_unchecked(grid, (0..grid.n_cells()).map(|_| rng.random_range(lo..hi)).collect())
}

/// Either cellwise noise or a few random cosine modes, at a random scale.
fn sample_field(rng: &mut ChaCha8Rng, grid: Grid1D) -> GridFunction {
    let scale = 10f64.powf(rng.random_range(-2.0..1.0));
    let offset: f64 = rng.random_range(-1.0..1.0);
    if rng.random::<bool>() {
        random_field(rng, grid, -1.0, 1.0).map(|v| scale * (v + offset))
    } else {
        let modes: Vec<(f64, f64)> = (0..4).map(|k| (rng.random_range(-1.0..1.0), k as f64)).collect();
        let l = grid.length();
        GridFunction::from_fn(grid, |x| {
            scale * (offset + modes.iter().map(|(a, k)| a * (k * std::f64::consts::PI * x / l).cos()).sum::<f64>())
        })
    }
}

fn relative_slack(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs) / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE)
}

fn reaction_for(kind: ReactionKind, tau_l: f64, tau: f64) -> ReactionSpec {
    if tau_l == 0.0 {
        ReactionSpec::zero()
    } else {
        ReactionSpec { kind, scale: tau_l / tau }
    }
}

fn context(p: f64, eps: f64, tau: f64, reaction: ReactionSpec, grid: Grid1D) -> Result<OperatorContext> {
    let params = ModelParams::new(p, eps, tau, 1, reaction.lipschitz(), grid.length())?;
    OperatorContext::new(params, reaction, grid)
}

/// Smallest eigenvalue of an SPD tridiagonal matrix by inverse power iteration.
fn smallest_eigenvalue(m: &TridiagonalMatrix) -> Option<f64> {
    let n = m.size();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (i as f64 * 0.61).sin()).collect();
    let mut lambda = f64::NAN;
    for _ in 0..300 {
        let y = m.solve(&x).ok()?;
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = y.iter().map(|v| v / norm).collect();
        let mx = m.mul_vec(&x);
        lambda = x.iter().zip(&mx).map(|(a, b)| a * b).sum();
    }
    Some(lambda)
}

fn check_mesh(rec: &mut Recorder, rng: &mut ChaCha8Rng, grid: Grid1D, trials: usize) {
    let (mut sbp, mut split, mut homog) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let u = sample_field(rng, grid);
        let v = sample_field(rng, grid);
        let (gu, gv) = (mesh::gradient(&u), mesh::gradient(&v));
        let lhs = mesh::face_inner(&gu, &gv, &grid);
        let rhs = -mesh::inner(&mesh::divergence(&gu, &grid), &v);
        let scale = mesh::face_inner(&gu.map(f64::abs), &gv.map(f64::abs), &grid).max(f64::MIN_POSITIVE);
        sbp = sbp.max((lhs - rhs).abs() / scale);

        let expect = mesh::norm_l2(&u).powi(2) + mesh::face_inner(&gu, &gu, &grid);
        let got = mesh::norm_v_p_unchecked(&u, 2.0);
        split = split.max((got - expect).abs() / expect.max(f64::MIN_POSITIVE));

        let alpha: f64 = rng.random_range(-3.0..3.0);
        let p: f64 = rng.random_range(2.0..6.0);
        let su = u.scaled(alpha);
        let l2 = alpha.abs() * mesh::norm_l2(&u);
        let vp = alpha.abs().powf(p) * mesh::norm_v_p_unchecked(&u, p);
        homog = homog
            .max((mesh::norm_l2(&su) - l2).abs() / l2.max(f64::MIN_POSITIVE))
            .max((mesh::norm_v_p_unchecked(&su, p) - vp).abs() / vp.max(f64::MIN_POSITIVE));
    }
    rec.at_most("mesh.summation_by_parts", sbp, 1e-12);
    rec.at_most("mesh.v_norm_p2_identity", split, 1e-12);
    rec.at_most("mesh.homogeneity", homog, 1e-11);
}

fn check_model(rec: &mut Recorder, rng: &mut ChaCha8Rng, trials: usize) {
    let (mut non_monotone, mut lip, mut inside, mut psi_fd, mut beta_fd) = (0usize, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let step = 1e-5;
    let cd = |f: &dyn Fn(f64) -> f64, v: f64| (f(v + step) - f(v - step)) / (2.0 * step);
    for _ in 0..trials {
        let eps = 10f64.powf(rng.random_range(-2.0..0.0));
        let a: f64 = rng.random_range(-3.0..4.0);
        let b: f64 = rng.random_range(-3.0..4.0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if psi_eps(lo, eps) > psi_eps(hi, eps) {
            non_monotone += 1;
        }
        if a != b {
            lip = lip.max((psi_eps(a, eps) - psi_eps(b, eps)).abs() * eps / (a - b).abs());
        }
        let w: f64 = rng.random_range(0.0..=1.0);
        inside = inside.max(psi_eps(w, eps).abs()).max(psi_eps(0.0, eps).abs()).max(psi_eps(1.0, eps).abs());
        if a.abs() > 1e-3 && (a - 1.0).abs() > 1e-3 {
            let eps_fd = eps.max(0.05);
            psi_fd = psi_fd.max((cd(&|v| psi_eps_antiderivative(v, eps_fd), a) - psi_eps(a, eps_fd)).abs());
        }
        let scale = rng.random_range(0.0..5.0);
        for r in [ReactionSpec::linear(scale), ReactionSpec::sine(scale)] {
            beta_fd = beta_fd.max((cd(&|v| r.antiderivative(v), a) - r.eval(a)).abs());
        }
    }
    rec.at_most("model.psi_monotone", non_monotone as f64, 0.0);
    rec.at_most("model.psi_lipschitz", lip, 1.0 + 1e-12);
    rec.at_most("model.psi_vanishes_on_box", inside, 0.0);
    rec.at_most("model.psi_potential_fd", psi_fd, 1e-6);
    rec.at_most("model.reaction_potential_fd", beta_fd, 1e-6);

    let bad = [
        ModelParams::new(2.0, 0.1, 1.0, 100, 100.0, 1.0).is_ok(),
        ModelParams::new(2.0, 0.1, 1.0, 100, 120.0, 1.0).is_ok(),
        ModelParams::new(1.99, 0.1, 1.0, 100, 0.0, 1.0).is_ok(),
    ];
    let good = ModelParams::new(2.0, 0.1, 1.0, 100, 99.0, 1.0).is_ok();
    let wrong = bad.iter().filter(|&&accepted| accepted).count() + usize::from(!good);
    rec.at_most("model.params_gate", wrong as f64, 0.0);
}

fn check_noise(rec: &mut Recorder, rng: &mut ChaCha8Rng, problem: &Problem, settings: &VerifySettings) -> Result<()> {
    let model = if problem.noise.sigma() > 0.0 { problem.noise } else { NoiseModel::new(problem.noise.modes(), 1.0)? };
    let tau = problem.ctx.tau();
    let steps = settings.noise_draws.div_ceil(model.modes()).max(1);
    let path = sample_path(&model, steps, tau, settings.seed)?;
    let n = path.entries().len() as f64;
    let mean = path.entries().iter().sum::<f64>() / n;
    let var = path.entries().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    rec.at_most("noise.increment_mean", mean.abs(), 4.0 * (tau / n).sqrt());
    rec.at_most("noise.increment_variance", (var / tau - 1.0).abs(), 0.05);
    let again = sample_path(&model, steps.min(1000), tau, settings.seed)?;
    let same = again.entries() == &path.entries()[..again.entries().len()];
    rec.at_most("noise.reproducibility", f64::from(u8::from(!same)), 0.0);

    let mut worst = f64::NEG_INFINITY;
    for sigma in [model.sigma(), 0.1, 1.0, 3.0] {
        let m = NoiseModel::new(model.modes(), sigma)?;
        let est = hs_lipschitz_estimate(&m, settings.hs_samples);
        worst = worst.max(est - m.l_g());
    }
    rec.at_most("noise.hs_lipschitz", worst, 0.0);

    let grid = *problem.ctx.grid();
    let (mut off_support, mut trunc) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let u = random_field(rng, grid, -0.5, 1.5);
        let dw: Vec<f64> = (0..model.modes() + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = apply_diffusion(&model, &u, &dw[..model.modes()]);
        for (v, o) in u.values().iter().zip(out.values()) {
            if !(0.25 < *v && *v < 0.75) {
                off_support = off_support.max(o.abs());
            }
        }
        let bigger = NoiseModel::new(model.modes() + 1, model.sigma())?;
        let out_big = apply_diffusion(&bigger, &u, &dw);
        for (i, (a, b)) in out.values().iter().zip(out_big.values()).enumerate() {
            let expect = (bigger.amplitude(model.modes() + 1) * bump(u.values()[i]) * dw[model.modes()]).abs();
            trunc = trunc.max(((a - b).abs() - expect).abs());
        }
    }
    rec.at_most("noise.diffusion_support", off_support, 0.0);
    rec.at_most("noise.truncation_consistency", trunc, 1e-14);
    Ok(())
}

fn check_operator(rec: &mut Recorder, rng: &mut ChaCha8Rng, problem: &Problem, settings: &VerifySettings) -> Result<()> {
    let grid = *problem.ctx.grid();
    let tau = problem.ctx.tau();
    let eps = problem.ctx.params().eps();
    let (mut coerc, mut mono) = (f64::INFINITY, f64::INFINITY);
    let (mut weak, mut non_monotone_continuity, mut jac_fd, mut min_eig) = (0.0f64, 0usize, 0.0f64, f64::INFINITY);
    for p in [2.0, 3.0, 4.0] {
        for (idx, tau_l) in [0.0, 0.5, 0.9].into_iter().enumerate() {
            let kind = if idx % 2 == 0 { ReactionKind::Linear } else { ReactionKind::Sine };
            let ctx = context(p, eps, tau, reaction_for(kind, tau_l, tau), grid)?;
            let c_p = settings.cp_scale * operator::monotonicity_constant(p);
            for k in 0..settings.inequality_trials {
                let u = sample_field(rng, grid);
                let (lhs, rhs) = operator::coercivity_sides(&ctx, &u);
                coerc = coerc.min(relative_slack(lhs, rhs));

                let v = match k % 3 {
                    0 => sample_field(rng, grid),
                    // Antipodal pairs make the algebraic inequality tight.
                    1 => u.scaled(-1.0),
                    _ => u.add(&sample_field(rng, grid).scaled(1e-3)),
                };
                let (lhs, rhs) = operator::monotonicity_sides(&ctx, &u, &v, c_p);
                mono = mono.min(relative_slack(lhs, rhs));
            }
            for _ in 0..20 {
                let u = sample_field(rng, grid);
                let v = sample_field(rng, grid);
                let lhs = mesh::inner(&operator::apply_plap(&ctx, &u), &v);
                let fl = operator::flux(&u, p);
                let gv = mesh::gradient(&v);
                let rhs = mesh::face_inner(&fl, &gv, &grid) + mesh::inner(&u.map(|x| operator::signed_pow(x, p)), &v);
                let scale = mesh::face_inner(&fl.map(f64::abs), &gv.map(f64::abs), &grid)
                    + mesh::inner(&u.map(|x| operator::signed_pow(x, p).abs()), &v.map(f64::abs));
                weak = weak.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));

                let base = operator::apply_a(&ctx, &u);
                let norms: Vec<f64> = (1..=6)
                    .map(|e| mesh::norm_l2(&operator::apply_a(&ctx, &u.axpy(10f64.powi(-e), &v)).sub(&base)))
                    .collect();
                if norms.windows(2).any(|w| !(w[1] < w[0])) {
                    non_monotone_continuity += 1;
                }

                let u = random_field(rng, grid, 0.1, 0.9);
                let dir = random_field(rng, grid, -1.0, 1.0);
                let d = 1e-6;
                let fd = operator::apply_a(&ctx, &u.axpy(d, &dir))
                    .sub(&operator::apply_a(&ctx, &u.axpy(-d, &dir)))
                    .scaled(0.5 / d);
                let jac = operator::jacobian(&ctx, &u);
                let jv = GridFunction::from_vec_unchecked(grid, jac.mul_vec(dir.values()));
                jac_fd = jac_fd.max(mesh::norm_l2(&fd.sub(&jv)) / (1.0 + mesh::norm_l2(&jv)));
            }
            for _ in 0..3 {
                let u = sample_field(rng, grid);
                let jac = operator::jacobian(&ctx, &u);
                let ratio = match (jac.is_symmetric(), smallest_eigenvalue(&jac)) {
                    (true, Some(lam)) => lam / (1.0 - tau_l),
                    _ => f64::NEG_INFINITY,
                };
                min_eig = min_eig.min(ratio);
            }
        }
    }
    rec.at_least("operator.coercivity", coerc, -INEQUALITY_SLACK);
    rec.at_least("operator.strong_monotonicity", mono, -INEQUALITY_SLACK);
    rec.at_most("operator.plap_weak_form", weak, 1e-12);
    rec.at_most("operator.continuity", non_monotone_continuity as f64, 0.0);
    rec.at_most("operator.jacobian_fd", jac_fd, 1e-6);
    rec.at_least("operator.jacobian_min_eigenvalue", min_eig, 1.0 - 1e-10);
    Ok(())
}

fn random_rhs(rng: &mut ChaCha8Rng, grid: Grid1D) -> GridFunction {
    let smooth = sample_field(rng, grid);
    let rough = random_field(rng, grid, -0.5, 1.5);
    rough.axpy(0.5, &smooth)
}

fn check_solver(rec: &mut Recorder, rng: &mut ChaCha8Rng, problem: &Problem, settings: &VerifySettings) -> Result<()> {
    let grid = *problem.ctx.grid();
    let cfg = problem.solver;
    let (mut uniq, mut energy_up, mut failures, mut max_iter) = (0.0f64, f64::NEG_INFINITY, 0usize, 0usize);
    let (mut st_l2, mut st_v, mut apriori, mut nondeterministic) =
        (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY, 0usize);
    let mut min_slope = f64::INFINITY;
    for p in [2.0, 3.0, 4.0] {
        let ctx = problem.ctx.with_params(problem.ctx.params().with_p(p)?)?;
        let zero = GridFunction::zeros(grid);
        for k in 0..settings.solve_trials {
            let rhs = random_rhs(rng, grid);
            let guess = sample_field(rng, grid).scaled(3.0);
            let first = solver::solve(&ctx, &rhs, &zero, &cfg);
            let second = solver::solve(&ctx, &rhs, &guess, &cfg);
            let ((a, rep_a), (b, rep_b)) = match (first, second) {
                (Ok(a), Ok(b)) => (a, b),
                _ => {
                    failures += 1;
                    continue;
                }
            };
            uniq = uniq.max(mesh::norm_l2(&a.sub(&b)));
            for rep in [&rep_a, &rep_b] {
                max_iter = max_iter.max(rep.iterations);
                for w in rep.energy_history.windows(2) {
                    energy_up = energy_up.max((w[1] - w[0]) / (1.0 + w[0].abs()));
                }
            }
            if k < 5 {
                match solver::solve(&ctx, &rhs, &zero, &cfg) {
                    Ok((again, rep)) if again == a && rep == rep_a => {}
                    _ => nondeterministic += 1,
                }
            }
            let (lhs, bound) = solver::apriori_bound(&ctx, &rhs, &a);
            apriori = apriori.max(lhs - bound);

            let delta = 10f64.powf(rng.random_range(-4.0..0.5));
            let rhs2 = rhs.axpy(delta, &random_rhs(rng, grid));
            match solver::solve(&ctx, &rhs2, &a, &cfg) {
                Ok((c, _)) => {
                    let s = solver::stability_bounds(&ctx, &rhs, &rhs2, &a, &c);
                    st_l2 = st_l2.max(s.l2_lhs - s.l2_bound);
                    st_v = st_v.max(s.v_lhs - s.v_bound);
                }
                Err(_) => failures += 1,
            }
        }

        // ||sol(rhs + delta e) - sol(rhs)|| = O(delta): least-squares slope in log-log.
        let rhs = random_rhs(rng, grid);
        let e = random_rhs(rng, grid);
        let base = solver::solve(&ctx, &rhs, &zero, &cfg).map(|r| r.0);
        let points: Option<Vec<(f64, f64)>> = base.ok().and_then(|base| {
            (1..=5)
                .map(|k| {
                    let delta = 10f64.powi(-k);
                    let (s, _) = solver::solve(&ctx, &rhs.axpy(delta, &e), &base, &cfg).ok()?;
                    Some((delta.ln(), mesh::norm_l2(&s.sub(&base)).ln()))
                })
                .collect()
        });
        match points {
            Some(pts) => {
                let n = pts.len() as f64;
                let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
                let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
                let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
                min_slope = min_slope.min(sxy / sxx);
            }
            None => failures += 1,
        }
    }
    rec.at_most("solver.uniqueness", uniq, 1e-8);
    rec.at_most("solver.energy_nonincreasing", energy_up, 1e-12);
    rec.at_most("solver.convergence", failures as f64, 0.0);
    rec.at_most("solver.max_iterations", max_iter as f64, cfg.max_newton as f64);
    rec.at_most("solver.determinism", nondeterministic as f64, 0.0);
    rec.at_most("solver.stability_l2", st_l2, solver::STABILITY_SLACK);
    rec.at_most("solver.stability_v", st_v, solver::STABILITY_SLACK);
    rec.at_most("solver.apriori_bound", apriori, solver::STABILITY_SLACK);
    rec.at_least("solver.perturbation_slope", min_slope, 0.99);
    Ok(())
}

fn check_stepper(rec: &mut Recorder, problem: &Problem, settings: &VerifySettings) -> Result<()> {
    let ctx = &problem.ctx;
    let grid = *ctx.grid();
    let tau = ctx.tau();
    let noise = if problem.noise.sigma() > 0.0 { problem.noise } else { NoiseModel::new(problem.noise.modes(), 1.0)? };
    let mut noisy = problem.clone();
    noisy.noise = noise;
    // Start inside the noise support so the forcing is active.
    noisy.initial = InitialDatum::new(GridFunction::from_fn(grid, |x| {
        0.5 + 0.2 * (std::f64::consts::PI * x / grid.length()).cos()
    }))?;
    let traj = noisy.run(settings.seed, StorageMode::Full)?;
    let inc = sample_path(&noise, ctx.params().steps(), tau, settings.seed)?;
    let mut worst = 0.0f64;
    let mut u_cold = noisy.initial.field().clone();
    for n in 0..ctx.params().steps() {
        let f_n = crate::model::average_source(&noisy.source, n, &grid, tau);
        let r = stepper::scheme_residual(ctx, &noise, &traj.states[n], &traj.states[n + 1], inc.row(n), &f_n);
        worst = worst.max(r);
        let rhs = stepper::step_rhs(ctx, &noise, &u_cold, inc.row(n), &f_n);
        u_cold = solver::solve(ctx, &rhs, &GridFunction::zeros(grid), &problem.solver)?.0;
    }
    rec.at_most("stepper.scheme_residual", worst, 1e-9);
    rec.at_most("stepper.warm_start_equivalence", mesh::norm_l2(&u_cold.sub(&traj.final_state)), 1e-8);

    let mut silent = noisy.clone();
    silent.noise = NoiseModel::new(noise.modes(), 0.0)?;
    let a = silent.run(settings.seed, StorageMode::Full)?;
    let b = silent.run(settings.seed.wrapping_add(7919), StorageMode::Full)?;
    rec.at_most("stepper.noise_off_consistency", f64::from(u8::from(a.states != b.states)), 0.0);
    Ok(())
}

fn check_cp(rec: &mut Recorder, settings: &VerifySettings) {
    let mut worst = f64::INFINITY;
    for p in [2.0, 2.5, 3.0, 4.0, 6.0] {
        worst = worst.min(estimate_cp(p, 1, settings.cp_samples) - operator::monotonicity_constant(p));
    }
    rec.at_least("harness.cp_estimate", worst, -1e-9);
}

/// Runs every property check around `problem` (its grid, time step,
/// penalization and solver settings) and returns the aggregated report.
pub fn verify_all(problem: &Problem, settings: &VerifySettings) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut rec = Recorder { checks: Vec::new() };
    let grid = *problem.ctx.grid();
    check_mesh(&mut rec, &mut rng, grid, settings.inequality_trials);
    check_model(&mut rec, &mut rng, settings.inequality_trials);
    check_noise(&mut rec, &mut rng, problem, settings)?;
    check_operator(&mut rec, &mut rng, problem, settings)?;
    check_solver(&mut rec, &mut rng, problem, settings)?;
    check_stepper(&mut rec, problem, settings)?;
    check_cp(&mut rec, settings);

    let coverage = CHECKLIST
        .iter()
        .map(|&(module, invariant, property)| CoverageItem {
            module: module.into(),
            invariant: invariant.into(),
            property: property.into(),
            checked: rec.checks.iter().any(|c| c.property == property),
        })
        .collect::<Vec<_>>();
    let passed = rec.checks.iter().all(|c| c.passed) && coverage.iter().all(|c| c.checked);
    Ok(VerifyReport { passed, checks: rec.checks, coverage })
}
