use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `(|a|^{p-2}a - |b|^{p-2}b)·(a - b) / |a - b|^p`, or `None` when `a = b`.
pub(crate) fn cp_ratio(a: &[f64], b: &[f64], p: f64) -> Option<f64> {
    let na = norm(a);
    let nb = norm(b);
    let (wa, wb) = if p == 2.0 { (1.0, 1.0) } else { (na.powf(p - 2.0), nb.powf(p - 2.0)) };
    let mut lhs = 0.0;
    let mut diff_sq = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        lhs += (wa * x - wb * y) * d;
        diff_sq += d * d;
    }
    if diff_sq == 0.0 {
        return None;
    }
    let denom = if p == 2.0 { diff_sq } else { diff_sq.sqrt().powf(p) };
    Some(lhs / denom)
}

/// Empirical infimum of the ratio above over `samples` pairs in `R^d`, mixing
/// independent pairs across scales, collinear pairs, and the near-antipodal
/// pairs `b ≈ -a` where the infimum `2^{2-p}` is attained.
pub fn estimate_cp(p: f64, d: usize, samples: usize) -> f64 {
    assert!(p >= 2.0, "p must be at least 2");
    assert!((1..=3).contains(&d), "dimension must be 1, 2 or 3");
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0_5eed ^ d as u64);
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut best = f64::INFINITY;
    for k in 0..samples {
        for x in a.iter_mut() {
            *x = rng.random_range(-1.0..1.0);
        }
        let scale_a = 10f64.powf(rng.random_range(-3.0..3.0));
        a.iter_mut().for_each(|x| *x *= scale_a);
        match k % 4 {
            0 => {
                let scale_b = 10f64.powf(rng.random_range(-3.0..3.0));
                for y in b.iter_mut() {
                    *y = scale_b * rng.random_range(-1.0..1.0);
                }
            }
            1 => {
                let t: f64 = rng.random_range(-3.0..3.0);
                for (y, x) in b.iter_mut().zip(&a) {
                    *y = t * x;
                }
            }
            2 => {
                let stretch = 1.0 + 10f64.powf(rng.random_range(-8.0..-1.0)) * rng.random_range(-1.0..1.0);
                let jitter = 10f64.powf(rng.random_range(-8.0..-1.0)) * scale_a;
                for (y, x) in b.iter_mut().zip(&a) {
                    *y = -stretch * x + jitter * rng.random_range(-1.0..1.0);
                }
            }
            _ => {
                for (y, x) in b.iter_mut().zip(&a) {
                    *y = -x;
                }
            }
        }
        if let Some(r) = cp_ratio(&a, &b, p) {
            best = best.min(r);
        }
    }
    best
}
