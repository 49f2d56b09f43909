use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stepper::{Problem, StateDiagnostics, StorageMode};

use super::{mean_var, Z95};

/// Per-time statistics over `n_paths` independent paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub n_paths: usize,
    pub base_seed: u64,
    pub times: Vec<f64>,
    pub l2_mean: Vec<f64>,
    pub l2_var: Vec<f64>,
    pub l2_half_width: Vec<f64>,
    pub violation_mean: Vec<f64>,
    pub violation_var: Vec<f64>,
    pub violation_half_width: Vec<f64>,
}

impl McSummary {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,l2_mean,l2_var,l2_half_width,violation_mean,violation_var,violation_half_width")?;
        for k in 0..self.times.len() {
            writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                self.times[k],
                self.l2_mean[k],
                self.l2_var[k],
                self.l2_half_width[k],
                self.violation_mean[k],
                self.violation_var[k],
                self.violation_half_width[k]
            )?;
        }
        Ok(())
    }
}

/// Simulates paths `base_seed + i`, `i < n_paths`, in parallel. Statistics are
/// accumulated in path-index order so the result does not depend on scheduling.
pub fn run_mc(problem: &Problem, n_paths: usize, base_seed: u64) -> Result<McSummary> {
    if n_paths < 2 {
        return Err(Error::invalid("n_paths", format!("need at least 2 paths, got {n_paths}")));
    }
    let paths: Vec<Vec<StateDiagnostics>> = (0..n_paths)
        .into_par_iter()
        .map(|i| problem.run(base_seed.wrapping_add(i as u64), StorageMode::Thin).map(|t| t.diagnostics))
        .collect::<Result<_>>()?;

    let n_times = paths[0].len();
    let mut s = McSummary {
        n_paths,
        base_seed,
        times: paths[0].iter().map(|d| d.t).collect(),
        l2_mean: Vec::with_capacity(n_times),
        l2_var: Vec::with_capacity(n_times),
        l2_half_width: Vec::with_capacity(n_times),
        violation_mean: Vec::with_capacity(n_times),
        violation_var: Vec::with_capacity(n_times),
        violation_half_width: Vec::with_capacity(n_times),
    };
    let hw = |var: f64| Z95 * (var / n_paths as f64).sqrt();
    for k in 0..n_times {
        let l2: Vec<f64> = paths.iter().map(|p| p[k].l2_norm).collect();
        let (m, v) = mean_var(&l2);
        s.l2_mean.push(m);
        s.l2_var.push(v);
        s.l2_half_width.push(hw(v));
        let viol: Vec<f64> = paths.iter().map(|p| p[k].constraint_violation).collect();
        let (m, v) = mean_var(&viol);
        s.violation_mean.push(m);
        s.violation_var.push(v);
        s.violation_half_width.push(hw(v));
    }
    Ok(s)
}
