use crate::error::Result;
use crate::mesh::{self, Grid1D, GridFunction};
use crate::model::{InitialDatum, ManufacturedSolution, ModelParams, ReactionSpec, SourceSpec};
use crate::noise::{coarsen_path, sample_path, NoiseModel, PathIncrements};
use crate::operator::OperatorContext;
use crate::solver::SolverConfig;
use crate::stepper::{Problem, StorageMode};

use super::RefinementTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManufacturedCase {
    /// `u* = 1/2 + 1/4 e^{-t} cos(pi x / L)`; tau and h refined together with
    /// `h^2 ∝ tau`.
    Decaying,
    /// `u* = 1/2 + 1/4 cos(pi x / L)`; tau fixed, h halved per level.
    Stationary,
}

/// Deterministic refinement study against a manufactured solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSetup {
    pub case: ManufacturedCase,
    pub p: f64,
    pub eps: f64,
    pub length: f64,
    pub horizon: f64,
    pub base_steps: usize,
    pub base_cells: usize,
    pub reaction: ReactionSpec,
    /// Noise is normally off; when on, every level sees the finest path coarsened.
    pub noise: NoiseModel,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl ConvergenceSetup {
    pub fn new(case: ManufacturedCase) -> Self {
        Self {
            case,
            p: 2.0,
            eps: 0.1,
            length: 1.0,
            horizon: 1.0,
            base_steps: 10,
            base_cells: 8,
            reaction: ReactionSpec::linear(0.5),
            noise: NoiseModel::silent(),
            seed: 0,
            solver: SolverConfig::default(),
        }
    }

    fn level_sizes(&self, k: usize) -> (usize, usize) {
        match self.case {
            ManufacturedCase::Decaying => {
                let cells = (self.base_cells as f64 * 2f64.powf(k as f64 / 2.0)).round() as usize;
                (self.base_steps << k, cells)
            }
            ManufacturedCase::Stationary => (self.base_steps, self.base_cells << k),
        }
    }

    fn manufactured(&self) -> ManufacturedSolution {
        ManufacturedSolution::new(self.p, self.length, self.reaction, self.case == ManufacturedCase::Decaying)
    }
}

/// Runs `levels` refinement levels and tabulates the discrete L² error at `T`
/// against the exact solution sampled at cell centers.
pub fn run_deterministic_convergence(setup: &ConvergenceSetup, levels: usize) -> Result<RefinementTable> {
    assert!(levels >= 2, "a refinement study needs at least two levels");
    let exact = setup.manufactured();
    let (finest_steps, _) = setup.level_sizes(levels - 1);
    let finest_tau = setup.horizon / finest_steps as f64;
    let fine_path = if setup.noise.sigma() > 0.0 {
        sample_path(&setup.noise, finest_steps, finest_tau, setup.seed)?
    } else {
        PathIncrements::zeros(finest_steps, setup.noise.modes(), finest_tau)
    };

    let name = match setup.case {
        ManufacturedCase::Decaying => "tau",
        ManufacturedCase::Stationary => "h",
    };
    let mut table = RefinementTable::new(name);
    table.metadata.insert("norm".into(), "discrete L2 at final time".into());
    table.metadata.insert(
        "reference".into(),
        format!(
            "u*(t,x) = {} + {}{} cos(pi x/{}), p = {}, reaction {:?}",
            exact.mean,
            exact.amplitude,
            if exact.decay { " e^-t" } else { "" },
            setup.length,
            setup.p,
            setup.reaction
        ),
    );
    table.metadata.insert("seed".into(), setup.seed.to_string());
    table.metadata.insert("sigma".into(), setup.noise.sigma().to_string());

    for k in 0..levels {
        let (steps, cells) = setup.level_sizes(k);
        let params = ModelParams::new(setup.p, setup.eps, setup.horizon, steps, setup.reaction.lipschitz(), setup.length)?;
        let grid = Grid1D::new(cells, setup.length)?;
        let ctx = OperatorContext::new(params, setup.reaction, grid)?;
        let initial = InitialDatum::new(GridFunction::from_fn(grid, |x| exact.exact(0.0, x)))?;
        let problem = Problem {
            ctx,
            noise: setup.noise,
            initial,
            source: SourceSpec::Manufactured(exact),
            solver: setup.solver,
        };
        let increments = coarsen_path(&fine_path, finest_steps / steps)?;
        let traj = problem.run_with(&increments, StorageMode::Thin)?;
        let reference = GridFunction::from_fn(grid, |x| exact.exact(setup.horizon, x));
        let err = mesh::norm_l2(&traj.final_state.sub(&reference));
        let parameter = match setup.case {
            ManufacturedCase::Decaying => params.tau(),
            ManufacturedCase::Stationary => grid.h(),
        };
        table.push(parameter, cells, steps, err, None);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_sizes_follow_refinement_policy() {
        let s = ConvergenceSetup::new(ManufacturedCase::Decaying);
        assert_eq!(s.level_sizes(0), (10, 8));
        assert_eq!(s.level_sizes(1), (20, 11));
        assert_eq!(s.level_sizes(2), (40, 16));
        let s = ConvergenceSetup::new(ManufacturedCase::Stationary);
        assert_eq!(s.level_sizes(3), (10, 64));
    }

    #[test]
    fn errors_decrease() {
        let t = run_deterministic_convergence(&ConvergenceSetup::new(ManufacturedCase::Decaying), 3).unwrap();
        assert!(t.rows.iter().all(|r| r.value.is_finite()));
        assert!(t.rows.windows(2).all(|w| w[1].value < w[0].value));
    }
}
