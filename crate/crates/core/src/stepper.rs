//! Semi-implicit Euler-Maruyama time loop: the diffusion is frozen at `u_n`,
//! everything else is implicit at `u_{n+1}`, so each step solves
//! `A(u_{n+1}) = u_n + G(u_n) ΔW + tau f_n`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mesh::{self, GridFunction};
use crate::model::{average_source, psi_eps, InitialDatum, SourceSpec};
use crate::noise::{apply_diffusion, sample_path, NoiseModel, PathIncrements};
use crate::operator::{apply_plap, OperatorContext};
use crate::solver::{solve, SolveReport, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageMode {
    #[default]
    Full,
    /// Keep only per-time diagnostics, not the states.
    Thin,
}

/// Scalar summaries of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateDiagnostics {
    pub t: f64,
    pub l2_norm: f64,
    pub v_norm_p: f64,
    pub constraint_violation: f64,
}

impl StateDiagnostics {
    pub fn of(t: f64, u: &GridFunction, p: f64) -> Self {
        Self {
            t,
            l2_norm: mesh::norm_l2(u),
            v_norm_p: mesh::norm_v_p_unchecked(u, p),
            constraint_violation: constraint_violation(u),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub mode: StorageMode,
    /// `M + 1` states in full mode, empty in thin mode.
    pub states: Vec<GridFunction>,
    /// `M + 1` entries, one per time `t_n = n tau`.
    pub diagnostics: Vec<StateDiagnostics>,
    pub reports: Vec<SolveReport>,
    /// Last state; kept in both modes.
    pub final_state: GridFunction,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.diagnostics.iter().map(|d| d.t)
    }

    /// CSV with `t,u1..uN` rows (full) or `t,l2_norm,v_norm_p,constraint_violation` rows (thin).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match self.mode {
            StorageMode::Full => {
                let n = self.final_state.len();
                let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("u{i}"))).collect();
                writeln!(out, "{}", header.join(","))?;
                for (d, u) in self.diagnostics.iter().zip(&self.states) {
                    let mut row = vec![format!("{:e}", d.t)];
                    row.extend(u.values().iter().map(|v| format!("{v:e}")));
                    writeln!(out, "{}", row.join(","))?;
                }
            }
            StorageMode::Thin => {
                writeln!(out, "t,l2_norm,v_norm_p,constraint_violation")?;
                for d in &self.diagnostics {
                    writeln!(out, "{:e},{:e},{:e},{:e}", d.t, d.l2_norm, d.v_norm_p, d.constraint_violation)?;
                }
            }
        }
        Ok(())
    }
}

/// `h Σ_i ((-u_i)^+ + (u_i - 1)^+)`: the L¹ distance of `u` to `[0, 1]`.
pub fn constraint_violation(u: &GridFunction) -> f64 {
    u.grid().h() * u.values().iter().map(|&v| (-v).max(0.0) + (v - 1.0).max(0.0)).sum::<f64>()
}

/// `u_n + G(u_n) ΔW + tau f_n`.
pub fn step_rhs(ctx: &OperatorContext, noise: &NoiseModel, u_n: &GridFunction, dw: &[f64], f_n: &GridFunction) -> GridFunction {
    let forcing = apply_diffusion(noise, u_n, dw);
    u_n.add(&forcing).axpy(ctx.tau(), f_n)
}

pub fn step(
    ctx: &OperatorContext,
    noise: &NoiseModel,
    u_n: &GridFunction,
    dw: &[f64],
    f_n: &GridFunction,
    cfg: &SolverConfig,
) -> Result<(GridFunction, SolveReport)> {
    let rhs = step_rhs(ctx, noise, u_n, dw, f_n);
    solve(ctx, &rhs, u_n, cfg)
}

/// Discrete L² norm of
/// `u_{n+1} - u_n + tau(Δ_p u_{n+1} + psi_eps(u_{n+1})) - G(u_n) ΔW - tau(beta(u_{n+1}) + f_n)`,
/// assembled term by term rather than through the solver's operator.
pub fn scheme_residual(
    ctx: &OperatorContext,
    noise: &NoiseModel,
    u_n: &GridFunction,
    u_next: &GridFunction,
    dw: &[f64],
    f_n: &GridFunction,
) -> f64 {
    let tau = ctx.tau();
    let eps = ctx.params().eps();
    let plap = apply_plap(ctx, u_next);
    let forcing = apply_diffusion(noise, u_n, dw);
    let vals: Vec<f64> = (0..u_n.len())
        .map(|i| {
            let v = u_next.values()[i];
            v - u_n.values()[i] + tau * (plap.values()[i] + psi_eps(v, eps))
                - forcing.values()[i]
                - tau * (ctx.reaction().eval(v) + f_n.values()[i])
        })
        .collect();
    mesh::norm_l2(&GridFunction::from_vec_unchecked(*u_n.grid(), vals))
}

/// Runs the scheme over all `M` steps with caller-supplied increments.
pub fn run_with_increments(
    ctx: &OperatorContext,
    noise: &NoiseModel,
    u0: &InitialDatum,
    source: &SourceSpec,
    increments: &PathIncrements,
    cfg: &SolverConfig,
    mode: StorageMode,
) -> Result<Trajectory> {
    let steps = ctx.params().steps();
    assert_eq!(increments.steps(), steps, "increments must have one row per step");
    let p = ctx.p();
    let tau = ctx.tau();
    let mut u = u0.field().clone();
    let mut states = Vec::new();
    if mode == StorageMode::Full {
        states.reserve(steps + 1);
        states.push(u.clone());
    }
    let mut diagnostics = Vec::with_capacity(steps + 1);
    diagnostics.push(StateDiagnostics::of(0.0, &u, p));
    let mut reports = Vec::with_capacity(steps);
    for n in 0..steps {
        let f_n = average_source(source, n, ctx.grid(), tau);
        let (next, report) = step(ctx, noise, &u, increments.row(n), &f_n, cfg)?;
        u = next;
        diagnostics.push(StateDiagnostics::of((n + 1) as f64 * tau, &u, p));
        if mode == StorageMode::Full {
            states.push(u.clone());
        }
        reports.push(report);
    }
    Ok(Trajectory { seed: increments.seed(), mode, states, diagnostics, reports, final_state: u })
}

/// Samples the increments from `seed` and runs the scheme.
pub fn run_path(
    ctx: &OperatorContext,
    noise: &NoiseModel,
    u0: &InitialDatum,
    source: &SourceSpec,
    seed: u64,
    cfg: &SolverConfig,
    mode: StorageMode,
) -> Result<Trajectory> {
    let increments = sample_path(noise, ctx.params().steps(), ctx.tau(), seed)?;
    run_with_increments(ctx, noise, u0, source, &increments, cfg, mode)
}

/// Everything needed to simulate paths of one discretized problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub ctx: OperatorContext,
    pub noise: NoiseModel,
    pub initial: InitialDatum,
    pub source: SourceSpec,
    pub solver: SolverConfig,
}

impl Problem {
    pub fn run(&self, seed: u64, mode: StorageMode) -> Result<Trajectory> {
        run_path(&self.ctx, &self.noise, &self.initial, &self.source, seed, &self.solver, mode)
    }

    pub fn run_with(&self, increments: &PathIncrements, mode: StorageMode) -> Result<Trajectory> {
        run_with_increments(&self.ctx, &self.noise, &self.initial, &self.source, increments, &self.solver, mode)
    }
}
