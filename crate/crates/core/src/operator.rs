//! The per-step operator
//!
//! `A(u) = u + tau (-div(|Du|^{p-2} Du) + |u|^{p-2} u + psi_eps(u) - beta(u))`
//!
//! on a cell-centered grid with zero boundary flux, together with its convex
//! energy and a symmetric tridiagonal generalized Jacobian.

use crate::error::{Error, Result};
use crate::mesh::{self, FaceField, Grid1D, GridFunction};
use crate::model::{psi_eps, psi_eps_antiderivative, psi_eps_derivative, ModelParams, ReactionSpec};

/// `|x|^{p-2} x`.
#[inline]
pub fn signed_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x
    } else {
        x.abs().powf(p - 2.0) * x
    }
}

/// `|x|^{p-2}`, equal to 1 for `p = 2` even at `x = 0`.
#[inline]
fn abs_pow_m2(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else {
        x.abs().powf(p - 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorContext {
    params: ModelParams,
    reaction: ReactionSpec,
    grid: Grid1D,
}

impl OperatorContext {
    /// Requires the declared `L_beta` to dominate the reaction's Lipschitz
    /// constant; `tau L_beta < 1` already holds by construction of `params`.
    pub fn new(params: ModelParams, reaction: ReactionSpec, grid: Grid1D) -> Result<Self> {
        if reaction.lipschitz() > params.l_beta() {
            return Err(Error::invalid(
                "reaction.scale",
                format!(
                    "reaction Lipschitz constant {} exceeds L_beta = {}",
                    reaction.lipschitz(),
                    params.l_beta()
                ),
            ));
        }
        if (params.length() - grid.length()).abs() > 1e-12 * params.length() {
            return Err(Error::invalid("length", "grid and model disagree on the domain length"));
        }
        Ok(Self { params, reaction, grid })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn reaction(&self) -> &ReactionSpec {
        &self.reaction
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.params.tau()
    }

    pub fn p(&self) -> f64 {
        self.params.p()
    }

    pub fn with_params(&self, params: ModelParams) -> Result<Self> {
        Self::new(params, self.reaction, self.grid)
    }
}

/// Face flux `|Du|^{p-2} Du`.
pub fn flux(u: &GridFunction, p: f64) -> FaceField {
    mesh::gradient(u).map(|d| signed_pow(d, p))
}

/// Neumann p-Laplacian plus the zeroth-order term: `-div F(u) + |u|^{p-2} u`.
pub fn apply_plap(ctx: &OperatorContext, u: &GridFunction) -> GridFunction {
    let p = ctx.p();
    let div = mesh::divergence(&flux(u, p), &ctx.grid);
    div.zip_map(u, |d, v| -d + signed_pow(v, p))
}

pub fn apply_a(ctx: &OperatorContext, u: &GridFunction) -> GridFunction {
    let tau = ctx.tau();
    let eps = ctx.params.eps();
    let beta = ctx.reaction;
    apply_plap(ctx, u).zip_map(u, |l, v| v + tau * (l + psi_eps(v, eps) - beta.eval(v)))
}

/// `A(u) - rhs`.
pub fn residual(ctx: &OperatorContext, u: &GridFunction, rhs: &GridFunction) -> GridFunction {
    apply_a(ctx, u).sub(rhs)
}

/// Convex energy whose h-scaled gradient is `A(u) - rhs`:
/// `½|u|² + tau(|u|_V^p / p + h Σ Ψ_eps(u_i) - h Σ B(u_i)) - h Σ rhs_i u_i`.
pub fn energy(ctx: &OperatorContext, u: &GridFunction, rhs: &GridFunction) -> f64 {
    let p = ctx.p();
    let h = ctx.grid.h();
    let eps = ctx.params.eps();
    let beta = ctx.reaction;
    let cell: f64 = u
        .values()
        .iter()
        .zip(rhs.values())
        .map(|(&v, &f)| {
            0.5 * v * v
                + ctx.tau() * (v.abs().powf(p) / p + psi_eps_antiderivative(v, eps) - beta.antiderivative(v))
                - f * v
        })
        .sum();
    let faces: f64 = mesh::gradient(u).values().iter().map(|d| d.abs().powf(p)).sum();
    h * cell + h * ctx.tau() * faces / p
}

/// `C(p) = 2^{2-p}` in `(|a|^{p-2}a - |b|^{p-2}b)(a - b) >= C(p)|a - b|^p`.
pub fn monotonicity_constant(p: f64) -> f64 {
    2f64.powf(2.0 - p)
}

/// Both sides of the coercivity estimate
/// `<A(u), u>_h >= (1 - tau L_beta)|u|^2 + tau |u|_V^p`.
pub fn coercivity_sides(ctx: &OperatorContext, u: &GridFunction) -> (f64, f64) {
    let lhs = mesh::inner(&apply_a(ctx, u), u);
    let l2 = mesh::norm_l2(u);
    let rhs = ctx.params.margin() * l2 * l2 + ctx.tau() * mesh::norm_v_p_unchecked(u, ctx.p());
    (lhs, rhs)
}

/// Both sides of the strong monotonicity estimate
/// `<A(u) - A(v), u - v>_h >= (1 - tau L_beta)|u - v|^2 + tau c_p |u - v|_V^p`.
pub fn monotonicity_sides(ctx: &OperatorContext, u: &GridFunction, v: &GridFunction, c_p: f64) -> (f64, f64) {
    let w = u.sub(v);
    let lhs = mesh::inner(&apply_a(ctx, u).sub(&apply_a(ctx, v)), &w);
    let l2 = mesh::norm_l2(&w);
    let rhs = ctx.params.margin() * l2 * l2 + ctx.tau() * c_p * mesh::norm_v_p_unchecked(&w, ctx.p());
    (lhs, rhs)
}

/// Symmetric tridiagonal matrix stored by its three diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalMatrix {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || lower.len() + 1 != n || upper.len() + 1 != n {
            return Err(Error::invalid("matrix", "off-diagonals must have one entry fewer than the diagonal"));
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_symmetric(&self) -> bool {
        self.lower == self.upper
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.upper[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Thomas algorithm. Fails on a vanishing pivot; never happens for the
    /// diagonally dominated Jacobians assembled here.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.size();
        assert_eq!(rhs.len(), n);
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = self.diag[i] - self.lower[i - 1] * c[i - 1];
            }
            if !(pivot.abs() > f64::MIN_POSITIVE) || !pivot.is_finite() {
                return Err(Error::invalid("matrix", format!("zero pivot at row {i}")));
            }
            if i + 1 < n {
                c[i] = self.upper[i] / pivot;
            }
            let prev = if i > 0 { self.lower[i - 1] * d[i - 1] } else { 0.0 };
            d[i] = (rhs[i] - prev) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }
}

/// Generalized Jacobian of [`apply_a`]: identity plus `tau` times the
/// face-weighted stiffness `(p-1)|D_f|^{p-2}/h^2` and the diagonal
/// `(p-1)|u_i|^{p-2} + psi_eps'(u_i) - beta'(u_i)`.
pub fn jacobian(ctx: &OperatorContext, u: &GridFunction) -> TridiagonalMatrix {
    let p = ctx.p();
    let tau = ctx.tau();
    let h = ctx.grid.h();
    let eps = ctx.params.eps();
    let n = u.len();
    let weights: Vec<f64> = mesh::gradient(u)
        .values()
        .iter()
        .map(|&d| (p - 1.0) * abs_pow_m2(d, p) / (h * h))
        .collect();
    let off: Vec<f64> = weights.iter().map(|w| -tau * w).collect();
    let diag = (0..n)
        .map(|i| {
            let v = u.values()[i];
            let left = if i > 0 { weights[i - 1] } else { 0.0 };
            let right = if i + 1 < n { weights[i] } else { 0.0 };
            1.0 + tau
                * (left + right + (p - 1.0) * abs_pow_m2(v, p) + psi_eps_derivative(v, eps)
                    - ctx.reaction.derivative(v))
        })
        .collect();
    TridiagonalMatrix { lower: off.clone(), diag, upper: off }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ReactionKind;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx(p: f64, tau: f64, eps: f64, reaction: ReactionSpec, n: usize) -> OperatorContext {
        let params = ModelParams::new(p, eps, tau, 1, reaction.lipschitz(), 1.0).unwrap();
        OperatorContext::new(params, reaction, Grid1D::new(n, 1.0).unwrap()).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, g: Grid1D, lo: f64, hi: f64) -> GridFunction {
        GridFunction::new(g, (0..g.n_cells()).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    }

    #[test]
    fn context_rejects_understated_l_beta() {
        let params = ModelParams::new(2.0, 0.1, 0.1, 1, 1.0, 1.0).unwrap();
        let g = Grid1D::new(4, 1.0).unwrap();
        let err = OperatorContext::new(params, ReactionSpec::linear(2.0), g).unwrap_err();
        assert!(err.to_string().contains("reaction.scale"));
    }

    #[test]
    fn plap_examples() {
        let c = ctx(3.0, 0.1, 0.1, ReactionSpec::zero(), 3);
        let g = *c.grid();
        assert!(apply_plap(&c, &GridFunction::zeros(g)).values().iter().all(|&v| v == 0.0));
        for v in apply_plap(&c, &GridFunction::constant(g, -0.7)).values() {
            assert_relative_eq!(*v, -0.49, max_relative = 1e-14);
        }
        // p = 2, h = 1: -Laplacian + identity on (0, 1, 0).
        let params = ModelParams::new(2.0, 0.1, 0.1, 1, 0.0, 3.0).unwrap();
        let c2 = OperatorContext::new(params, ReactionSpec::zero(), Grid1D::new(3, 3.0).unwrap()).unwrap();
        let u = GridFunction::new(*c2.grid(), vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(apply_plap(&c2, &u).values(), &[-1.0, 3.0, -1.0]);
    }

    #[test]
    fn operator_examples() {
        let c = ctx(2.0, 0.1, 0.1, ReactionSpec::zero(), 5);
        let g = *c.grid();
        assert!(apply_a(&c, &GridFunction::zeros(g)).values().iter().all(|&v| v == 0.0));
        for v in apply_a(&c, &GridFunction::constant(g, 0.5)).values() {
            assert_relative_eq!(*v, 0.55, max_relative = 1e-14);
        }
        for v in apply_a(&c, &GridFunction::constant(g, 1.2)).values() {
            assert_relative_eq!(*v, 1.52, max_relative = 1e-14);
        }
    }

    #[test]
    fn energy_at_zero() {
        let c = ctx(4.0, 0.1, 0.1, ReactionSpec::sine(1.0), 5);
        let z = GridFunction::zeros(*c.grid());
        assert_eq!(energy(&c, &z, &z), 0.0);
    }

    #[test]
    fn energy_constant_state() {
        // u ≡ c in [0,1], p = 2, length 1, no reaction: ½c² + tau c²/2.
        let c = ctx(2.0, 0.1, 0.1, ReactionSpec::zero(), 8);
        let u = GridFunction::constant(*c.grid(), 0.6);
        let z = GridFunction::zeros(*c.grid());
        assert_relative_eq!(energy(&c, &u, &z), 0.5 * 0.36 + 0.1 * 0.18, max_relative = 1e-14);
    }

    #[test]
    fn energy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(p, kind) in &[(2.0, ReactionKind::Linear), (3.0, ReactionKind::Sine), (4.5, ReactionKind::Zero)] {
            let c = ctx(p, 0.05, 0.2, ReactionSpec::new(kind, 2.0).unwrap(), 12);
            let g = *c.grid();
            let u = random_field(&mut rng, g, -0.5, 1.5);
            let rhs = random_field(&mut rng, g, -1.0, 1.0);
            let grad = residual(&c, &u, &rhs);
            let d = 1e-6;
            for i in 0..g.n_cells() {
                let mut up = u.clone();
                up.values_mut()[i] += d;
                let mut dn = u.clone();
                dn.values_mut()[i] -= d;
                let fd = (energy(&c, &up, &rhs) - energy(&c, &dn, &rhs)) / (2.0 * d) / g.h();
                assert!((fd - grad.values()[i]).abs() <= 1e-5 * (1.0 + grad.values()[i].abs()), "p {p} cell {i}: {fd} vs {}", grad.values()[i]);
            }
        }
    }

    #[test]
    fn jacobian_p2_is_shifted_laplacian() {
        let tau = 0.1;
        let c = ctx(2.0, tau, 0.1, ReactionSpec::zero(), 4);
        let h = c.grid().h();
        let j = jacobian(&c, &GridFunction::constant(*c.grid(), 0.5));
        assert!(j.is_symmetric());
        let k = 1.0 / (h * h);
        let expect_diag = [1.0 + tau * (k + 1.0), 1.0 + tau * (2.0 * k + 1.0), 1.0 + tau * (2.0 * k + 1.0), 1.0 + tau * (k + 1.0)];
        for (a, b) in j.diag().iter().zip(expect_diag) {
            assert_relative_eq!(*a, b, max_relative = 1e-14);
        }
        assert!(j.upper().iter().all(|&v| (v + tau * k).abs() < 1e-12));
    }

    #[test]
    fn jacobian_directional_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in [2.0, 2.5, 3.0, 4.0] {
            for kind in [ReactionKind::Zero, ReactionKind::Linear, ReactionKind::Sine] {
                let c = ctx(p, 0.05, 0.1, ReactionSpec::new(kind, 3.0).unwrap(), 16);
                let g = *c.grid();
                let u = random_field(&mut rng, g, 0.1, 0.9);
                let v = random_field(&mut rng, g, -1.0, 1.0);
                let d = 1e-6;
                let fd = apply_a(&c, &u.axpy(d, &v)).sub(&apply_a(&c, &u)).scaled(1.0 / d);
                let jv = jacobian(&c, &u).mul_vec(v.values());
                let jv = GridFunction::new(g, jv).unwrap();
                let err = mesh::norm_l2(&fd.sub(&jv));
                assert!(err <= 1e-3 * (1.0 + mesh::norm_l2(&jv)), "p {p} {kind:?}: {err}");
            }
        }
    }

    /// Smallest eigenvalue by inverse power iteration (the matrix is SPD).
    fn smallest_eigenvalue(m: &TridiagonalMatrix) -> f64 {
        let n = m.size();
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let y = m.solve(&x).unwrap();
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            x = y.iter().map(|v| v / norm).collect();
            let mx = m.mul_vec(&x);
            lambda = x.iter().zip(&mx).map(|(a, b)| a * b).sum();
        }
        lambda
    }

    #[test]
    fn jacobian_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for p in [2.0, 3.0, 4.0] {
            for tlb in [0.0, 0.5, 0.9] {
                let tau = 0.05;
                let c = ctx(p, tau, 0.1, ReactionSpec::linear(tlb / tau), 20);
                let u = random_field(&mut rng, *c.grid(), -0.5, 1.5);
                let lam = smallest_eigenvalue(&jacobian(&c, &u));
                assert!(lam >= (1.0 - tlb) * (1.0 - 1e-10), "p {p} tauL {tlb}: {lam}");
            }
        }
    }

    #[test]
    fn thomas_solves_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 30;
        let off: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..0.0)).collect();
        let diag: Vec<f64> = (0..n).map(|_| rng.random_range(2.5..4.0)).collect();
        let m = TridiagonalMatrix::new(off.clone(), diag, off).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sol = m.solve(&m.mul_vec(&x)).unwrap();
        for (a, b) in sol.iter().zip(&x) {
            assert!((a - b).abs() < 1e-13);
        }
        let singular = TridiagonalMatrix::new(vec![1.0], vec![1.0, 1.0], vec![1.0]).unwrap();
        assert!(singular.solve(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn plap_weak_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in [2.0, 3.0, 5.0] {
            let c = ctx(p, 0.1, 0.1, ReactionSpec::zero(), 25);
            let g = *c.grid();
            let u = random_field(&mut rng, g, -2.0, 2.0);
            let v = random_field(&mut rng, g, -2.0, 2.0);
            let lhs = mesh::inner(&apply_plap(&c, &u), &v);
            let grad_v = mesh::gradient(&v);
            let rhs = mesh::face_inner(&flux(&u, p), &grad_v, &g) + mesh::inner(&u.map(|x| signed_pow(x, p)), &v);
            let scale = mesh::face_inner(&flux(&u, p).map(f64::abs), &grad_v.map(f64::abs), &g);
            assert!((lhs - rhs).abs() <= 1e-12 * scale, "p {p}");
        }
    }
}
