//! Experiments and oracles built on the scheme: the monotonicity constant
//! estimator, refinement studies, Monte Carlo statistics and the property
//! verification report.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

mod convergence;
mod cp;
mod eps;
mod mc;
mod verify;

pub use convergence::{run_deterministic_convergence, ConvergenceSetup, ManufacturedCase};
pub use cp::estimate_cp;
pub use eps::{run_eps_study, violation_nonincreasing, EpsStudySetup};
pub use mc::{run_mc, McSummary};
pub use verify::{verify_all, CoverageItem, PropertyCheck, VerifySettings, VerifyReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementRow {
    /// Refinement parameter (tau, h or eps).
    pub parameter: f64,
    pub n_cells: usize,
    pub steps: usize,
    /// Error or violation measured at this level.
    pub value: f64,
    /// `value[k-1] / value[k]`; absent on the first row.
    pub ratio: Option<f64>,
    /// `log(ratio) / log(parameter[k-1] / parameter[k])`.
    pub order: Option<f64>,
    /// Monte Carlo half-width of `value` when it is a path average.
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementTable {
    pub parameter_name: String,
    pub rows: Vec<RefinementRow>,
    pub metadata: BTreeMap<String, String>,
}

impl RefinementTable {
    pub(crate) fn new(parameter_name: &str) -> Self {
        Self { parameter_name: parameter_name.to_string(), rows: Vec::new(), metadata: BTreeMap::new() }
    }

    pub(crate) fn push(&mut self, parameter: f64, n_cells: usize, steps: usize, value: f64, half_width: Option<f64>) {
        let (ratio, order) = match self.rows.last() {
            Some(prev) => {
                let ratio = prev.value / value;
                (Some(ratio), Some(ratio.ln() / (prev.parameter / parameter).ln()))
            }
            None => (None, None),
        };
        self.rows.push(RefinementRow { parameter, n_cells, steps, value, ratio, order, half_width });
    }

    pub fn last_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.order)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{},n_cells,steps,value,ratio,order,half_width", self.parameter_name)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                out,
                "{:e},{},{},{:e},{},{},{}",
                r.parameter,
                r.n_cells,
                r.steps,
                r.value,
                opt(r.ratio),
                opt(r.order),
                opt(r.half_width)
            )?;
        }
        Ok(())
    }
}

/// Two-sided 95% normal quantile for confidence half-widths.
pub(crate) const Z95: f64 = 1.959_963_984_540_054;

/// Sample mean and unbiased variance, shifted by the first sample so that
/// identical samples give exactly zero variance.
pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let x0 = xs[0];
    let shift = xs.iter().map(|x| x - x0).sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - x0 - shift).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (x0 + shift, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_orders() {
        let mut t = RefinementTable::new("tau");
        t.push(0.1, 8, 10, 0.4, None);
        t.push(0.05, 11, 20, 0.2, None);
        t.push(0.025, 16, 40, 0.05, None);
        assert_eq!(t.rows[0].order, None);
        assert!((t.rows[1].order.unwrap() - 1.0).abs() < 1e-12);
        assert!((t.last_order().unwrap() - 2.0).abs() < 1e-12);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("tau,n_cells,steps,value,ratio,order,half_width\n1e-1,8,10,4e-1,,,\n"));
    }

    #[test]
    fn moments() {
        let (m, v) = mean_var(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(v, 1.0);
        assert_eq!(mean_var(&[5.0]).1, 0.0);
    }
}
