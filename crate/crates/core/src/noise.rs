//! Multiplicative colored noise: independent scalar Wiener increments and the
//! diffusion maps `g_j(r) = sigma 2^{-j/2} phi(r)`.
//!
//! The bump `phi(r) = sin^2(2 pi (r - 1/4))` on `[1/4, 3/4]` (zero elsewhere) is
//! C¹ with `|phi'| <= 2 pi`, so `Σ_j |g_j(r) - g_j(s)|^2 <= sigma^2 4 pi^2 |r - s|^2`.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::GridFunction;

pub const DEFAULT_MODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    modes: usize,
    sigma: f64,
}

impl NoiseModel {
    pub fn new(modes: usize, sigma: f64) -> Result<Self> {
        if modes == 0 {
            return Err(Error::invalid("J", "need at least one mode"));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid("sigma", format!("must be nonnegative, got {sigma}")));
        }
        Ok(Self { modes, sigma })
    }

    pub fn silent() -> Self {
        Self { modes: DEFAULT_MODES, sigma: 0.0 }
    }

    /// Truncation level `J`.
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `c_j = sigma 2^{-j/2}` for 1-based `j`.
    pub fn amplitude(&self, j: usize) -> f64 {
        self.sigma * 2f64.powf(-(j as f64) / 2.0)
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.modes).map(|j| self.amplitude(j))
    }

    /// `Σ_j c_j^2`.
    pub fn amplitude_energy(&self) -> f64 {
        self.amplitudes().map(|c| c * c).sum()
    }

    pub fn g(&self, j: usize, r: f64) -> f64 {
        self.amplitude(j) * bump(r)
    }

    /// Analytic Hilbert-Schmidt Lipschitz constant `sigma^2 4 pi^2`.
    pub fn l_g(&self) -> f64 {
        self.sigma * self.sigma * 4.0 * PI * PI
    }
}

/// `sin^2(2 pi (r - 1/4))` on `[1/4, 3/4]`, zero elsewhere.
pub fn bump(r: f64) -> f64 {
    if (0.25..=0.75).contains(&r) {
        let s = (2.0 * PI * (r - 0.25)).sin();
        s * s
    } else {
        0.0
    }
}

/// Wiener increments for one path: `steps` rows by `modes` columns, each entry
/// `N(0, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathIncrements {
    steps: usize,
    modes: usize,
    tau: f64,
    seed: u64,
    data: Vec<f64>,
}

impl PathIncrements {
    pub fn from_rows(rows: Vec<Vec<f64>>, tau: f64, seed: u64) -> Result<Self> {
        let steps = rows.len();
        let modes = rows.first().map_or(0, Vec::len);
        if steps == 0 || modes == 0 || rows.iter().any(|r| r.len() != modes) {
            return Err(Error::invalid("increments", "need a nonempty rectangular matrix"));
        }
        Ok(Self { steps, modes, tau, seed, data: rows.into_iter().flatten().collect() })
    }

    /// All zeros; used when the noise amplitude vanishes.
    pub fn zeros(steps: usize, modes: usize, tau: f64) -> Self {
        Self { steps, modes, tau, seed: 0, data: vec![0.0; steps * modes] }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Variance parameter of each entry.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.modes..(n + 1) * self.modes]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    /// CSV with header `j1,...,jJ` and one row per step.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.modes).map(|j| format!("j{j}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for n in 0..self.steps {
            let row: Vec<String> = self.row(n).iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn sample_path(model: &NoiseModel, steps: usize, tau: f64, seed: u64) -> Result<PathIncrements> {
    if steps == 0 {
        return Err(Error::invalid("M", "need at least one step"));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = tau.sqrt();
    let data = (0..steps * model.modes)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(PathIncrements { steps, modes: model.modes, tau, seed, data })
}

/// Sums consecutive blocks of `factor` rows, giving the increments of the
/// same Brownian path on a grid `factor` times coarser.
pub fn coarsen_path(fine: &PathIncrements, factor: usize) -> Result<PathIncrements> {
    if factor == 0 || !fine.steps.is_multiple_of(factor) {
        return Err(Error::invalid(
            "factor",
            format!("{factor} does not divide the number of steps {}", fine.steps),
        ));
    }
    let steps = fine.steps / factor;
    let mut data = vec![0.0; steps * fine.modes];
    for n in 0..steps {
        let out = &mut data[n * fine.modes..(n + 1) * fine.modes];
        for k in n * factor..(n + 1) * factor {
            for (o, v) in out.iter_mut().zip(fine.row(k)) {
                *o += v;
            }
        }
    }
    Ok(PathIncrements { steps, modes: fine.modes, tau: fine.tau * factor as f64, seed: fine.seed, data })
}

/// Cellwise `Σ_j g_j(u_i) dW_j = phi(u_i) Σ_j c_j dW_j`.
pub fn apply_diffusion(model: &NoiseModel, u: &GridFunction, dw: &[f64]) -> GridFunction {
    assert_eq!(dw.len(), model.modes, "increment row length must equal the number of modes");
    let weight: f64 = model.amplitudes().zip(dw).map(|(c, w)| c * w).sum();
    u.map(|v| bump(v) * weight)
}

/// Largest sampled ratio `Σ_j |g_j(r) - g_j(s)|^2 / |r - s|^2`, over `samples`
/// pairs drawn from a fixed stream: half at random separations, half closely
/// spaced so the ratio probes `|phi'|`.
pub fn hs_lipschitz_estimate(model: &NoiseModel, samples: usize) -> f64 {
    let energy = model.amplitude_energy();
    if energy == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1195);
    let mut best = 0.0f64;
    for k in 0..samples {
        let r: f64 = rng.random_range(-0.25..1.25);
        let s = if k % 2 == 0 {
            rng.random_range(-0.25..1.25)
        } else {
            let gap = 10f64.powf(rng.random_range(-7.0..-1.0));
            if rng.random::<bool>() { r + gap } else { r - gap }
        };
        if r == s {
            continue;
        }
        let dg = bump(r) - bump(s);
        best = best.max(energy * dg * dg / ((r - s) * (r - s)));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid1D;
    use approx::assert_relative_eq;

    #[test]
    fn amplitudes_are_square_summable() {
        let m = NoiseModel::new(40, 1.3).unwrap();
        assert!(m.amplitude_energy() <= 1.3 * 1.3);
        assert_relative_eq!(m.amplitude(2), 1.3 * 0.5);
        assert!(NoiseModel::new(0, 1.0).is_err());
        assert!(NoiseModel::new(3, -1.0).is_err());
    }

    #[test]
    fn bump_support() {
        for r in [-1.0, 0.0, 0.1, 0.2499, 0.7501, 0.9, 1.0, 2.0] {
            assert_eq!(bump(r), 0.0);
        }
        assert_relative_eq!(bump(0.5), 1.0, max_relative = 1e-15);
        assert!(bump(0.25).abs() < 1e-30 && bump(0.75).abs() < 1e-30);
    }

    #[test]
    fn increment_statistics() {
        let m = NoiseModel::new(10, 1.0).unwrap();
        let tau = 0.01;
        let path = sample_path(&m, 100_000, tau, 7).unwrap();
        let n = path.entries().len() as f64;
        let mean = path.entries().iter().sum::<f64>() / n;
        let var = path.entries().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 4.0 * (tau / n).sqrt(), "mean {mean}");
        assert!((var / tau - 1.0).abs() <= 0.05, "var {var}");
    }

    #[test]
    fn same_seed_same_path() {
        let m = NoiseModel::new(5, 1.0).unwrap();
        let a = sample_path(&m, 50, 0.02, 11).unwrap();
        let b = sample_path(&m, 50, 0.02, 11).unwrap();
        let c = sample_path(&m, 50, 0.02, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.entries(), c.entries());
    }

    #[test]
    fn coarsening() {
        let m = NoiseModel::new(3, 1.0).unwrap();
        let fine = sample_path(&m, 8, 0.1, 1).unwrap();
        assert_eq!(coarsen_path(&fine, 1).unwrap(), fine);
        assert!(coarsen_path(&fine, 3).is_err());
        assert!(coarsen_path(&fine, 0).is_err());

        let two = PathIncrements::from_rows(vec![vec![1.0, 2.0], vec![0.5, -4.0]], 0.1, 0).unwrap();
        let c = coarsen_path(&two, 2).unwrap();
        assert_eq!(c.steps(), 1);
        assert_eq!(c.row(0), &[1.5, -2.0]);
        assert_relative_eq!(c.tau(), 0.2);
    }

    #[test]
    fn coarsened_variance() {
        let m = NoiseModel::new(4, 1.0).unwrap();
        let (tau, factor) = (0.01, 4);
        let mut sum_sq = 0.0;
        let mut count = 0.0;
        for seed in 0..500 {
            let c = coarsen_path(&sample_path(&m, 64, tau, seed).unwrap(), factor).unwrap();
            sum_sq += c.entries().iter().map(|v| v * v).sum::<f64>();
            count += c.entries().len() as f64;
        }
        let var = sum_sq / count;
        assert!((var / (factor as f64 * tau) - 1.0).abs() <= 0.05, "var {var}");
    }

    #[test]
    fn diffusion_examples() {
        let g = Grid1D::new(4, 1.0).unwrap();
        let m = NoiseModel::new(1, 1.0).unwrap();
        let zero = apply_diffusion(&m, &GridFunction::zeros(g), &[1.0]);
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let half = GridFunction::constant(g, 0.5);
        assert!(apply_diffusion(&m, &half, &[0.0]).values().iter().all(|&v| v == 0.0));
        for v in apply_diffusion(&m, &half, &[1.0]).values() {
            assert_relative_eq!(*v, 0.5f64.sqrt(), max_relative = 1e-14);
        }
    }

    #[test]
    fn truncation_adds_one_mode() {
        let g = Grid1D::new(6, 1.0).unwrap();
        let u = GridFunction::from_fn(g, |x| x);
        let dw = [0.3, -0.2, 0.7, 1.1, -0.4];
        let j = 4;
        let a = apply_diffusion(&NoiseModel::new(j, 0.8).unwrap(), &u, &dw[..j]);
        let big = NoiseModel::new(j + 1, 0.8).unwrap();
        let b = apply_diffusion(&big, &u, &dw);
        for (i, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
            let expect = (big.amplitude(j + 1) * bump(u.values()[i]) * dw[j]).abs();
            assert!(((x - y).abs() - expect).abs() <= 1e-15);
        }
    }

    #[test]
    fn hs_estimate_bounded() {
        assert_eq!(hs_lipschitz_estimate(&NoiseModel::new(8, 0.0).unwrap(), 1000), 0.0);
        for sigma in [0.1, 1.0, 3.0] {
            let m = NoiseModel::new(16, sigma).unwrap();
            let est = hs_lipschitz_estimate(&m, 100_000);
            assert!(est <= m.l_g(), "{est} > {}", m.l_g());
            // Σ c_j^2 = sigma^2 (1 - 2^-16) and sup |phi'| = 2 pi, so the estimate is nearly sharp.
            assert!(est >= 0.99 * m.l_g());
        }
    }

    #[test]
    fn csv_dump() {
        let p = PathIncrements::from_rows(vec![vec![1.0, -0.5]], 0.1, 3).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "j1,j2\n1e0,-5e-1\n");
    }
}
