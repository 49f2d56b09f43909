use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stepper::{Problem, StorageMode};

use super::{mean_var, RefinementTable, Z95};

/// Penalization study: the same problem and seed set at decreasing `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsStudySetup {
    pub problem: Problem,
    pub eps_levels: Vec<f64>,
    pub n_paths: usize,
    pub base_seed: u64,
}

/// Mean over paths of `max_n constraint_violation(u_n)` per `eps` level.
pub fn run_eps_study(setup: &EpsStudySetup) -> Result<RefinementTable> {
    if setup.eps_levels.is_empty() || setup.eps_levels.windows(2).any(|w| !(w[1] < w[0])) || setup.eps_levels[0] <= 0.0 {
        return Err(Error::invalid("eps_levels", "must be a nonempty, strictly decreasing list of positive values"));
    }
    if setup.n_paths == 0 {
        return Err(Error::invalid("n_paths", "must be at least 1"));
    }
    let mut table = RefinementTable::new("eps");
    table.metadata.insert("value".into(), "mean over paths of max-over-time constraint violation".into());
    table.metadata.insert("base_seed".into(), setup.base_seed.to_string());
    table.metadata.insert("seed_policy".into(), "path i uses base_seed + i at every eps".into());
    table.metadata.insert("n_paths".into(), setup.n_paths.to_string());

    let params = *setup.problem.ctx.params();
    for &eps in &setup.eps_levels {
        let mut problem = setup.problem.clone();
        problem.ctx = problem.ctx.with_params(params.with_eps(eps)?)?;
        let peaks: Vec<f64> = (0..setup.n_paths)
            .into_par_iter()
            .map(|i| {
                let traj = problem.run(setup.base_seed.wrapping_add(i as u64), StorageMode::Thin)?;
                Ok(traj.diagnostics.iter().map(|d| d.constraint_violation).fold(0.0, f64::max))
            })
            .collect::<Result<_>>()?;
        let (mean, var) = mean_var(&peaks);
        let hw = Z95 * (var / peaks.len() as f64).sqrt();
        table.push(eps, problem.ctx.grid().n_cells(), params.steps(), mean, Some(hw));
    }
    Ok(table)
}

/// Whether the violation is nonincreasing along the table, allowing at most
/// one inversion that stays within the combined half-width of the two rows.
pub fn violation_nonincreasing(table: &RefinementTable) -> bool {
    let mut inversions = 0;
    for w in table.rows.windows(2) {
        if w[1].value > w[0].value {
            let hw0 = w[0].half_width.unwrap_or(0.0);
            let hw1 = w[1].half_width.unwrap_or(0.0);
            if w[1].value - w[0].value > (hw0 * hw0 + hw1 * hw1).sqrt() {
                return false;
            }
            inversions += 1;
        }
    }
    inversions <= 1
}
