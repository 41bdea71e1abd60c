use serde::{Deserialize, Serialize};

use super::{compute_metrics, NamedController, Scenario, SimulationPlan};
use crate::control::ControllerConfig;
use crate::error::{Error, Result};

/// Controller family swept over one or two parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SweepFamily {
    /// `x` is `a`, `y` is `b`.
    OpenLoop {
        #[serde(default = "default_week")]
        period: usize,
    },
    /// `x` is the threshold, `y` is the dose.
    RuleBased,
    /// `x` is `Ω`.
    NormRmpc,
    /// `x` is the setpoint.
    SpTracking,
}

fn default_week() -> usize {
    28
}

impl SweepFamily {
    fn two_dimensional(self) -> bool {
        matches!(self, SweepFamily::OpenLoop { .. } | SweepFamily::RuleBased)
    }

    fn config(self, x: f64, y: f64) -> ControllerConfig {
        match self {
            SweepFamily::OpenLoop { period } => ControllerConfig::OpenLoop { a: x, b: y, period },
            SweepFamily::RuleBased => ControllerConfig::RuleBased { threshold: x, dose: y },
            SweepFamily::NormRmpc => ControllerConfig::NormRmpc { omega: x },
            SweepFamily::SpTracking => ControllerConfig::SpTracking { setpoint: x },
        }
    }

    pub fn parameter_names(self) -> (&'static str, &'static str) {
        match self {
            SweepFamily::OpenLoop { .. } => ("a", "b"),
            SweepFamily::RuleBased => ("threshold", "dose"),
            SweepFamily::NormRmpc => ("omega", "-"),
            SweepFamily::SpTracking => ("setpoint", "-"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub x: Vec<f64>,
    /// Ignored by one-parameter families.
    #[serde(default)]
    pub y: Vec<f64>,
}

impl SweepGrid {
    pub fn cells(&self, family: SweepFamily) -> Vec<(f64, f64)> {
        if family.two_dimensional() {
            self.x.iter().flat_map(|&x| self.y.iter().map(move |&y| (x, y))).collect()
        } else {
            self.x.iter().map(|&x| (x, f64::NAN)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub x: f64,
    pub y: f64,
    pub violation_pct: f64,
    pub avg_monthly_violation_pct: f64,
    pub total_irrigation: f64,
    pub error: Option<String>,
}

/// One closed-loop run per grid cell on the plan's test series.
pub fn grid_sweep(family: SweepFamily, grid: &SweepGrid, plan: &SimulationPlan) -> Result<Vec<SweepCell>> {
    let cells = grid.cells(family);
    if cells.is_empty() {
        return Err(Error::Validation("sweep grid is empty".into()));
    }
    let roster: Vec<NamedController> = cells
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| NamedController {
            name: format!("cell{i:05}"),
            config: family.config(x, y),
        })
        .collect();
    let mut base = plan.clone();
    base.controllers = roster.clone();
    let scenario = Scenario::prepare(&base)?;
    let traces = super::run_roster(&scenario, &roster, plan.parallel);
    Ok(cells
        .iter()
        .zip(&roster)
        .map(|(&(x, y), c)| {
            let tr = &traces[&c.name];
            let m = &compute_metrics([tr]).controllers[0];
            SweepCell {
                x,
                y,
                violation_pct: m.violation_pct,
                avg_monthly_violation_pct: m.avg_monthly_violation_pct,
                total_irrigation: m.total_irrigation,
                error: tr.error.clone(),
            }
        })
        .collect())
}

/// CSV with one row per cell.
pub fn sweep_csv(family: SweepFamily, cells: &[SweepCell]) -> String {
    let (nx, ny) = family.parameter_names();
    let mut s = format!("{nx},{ny},violation_pct,avg_monthly_violation_pct,total_irrigation,error\n");
    for c in cells {
        let y = if c.y.is_nan() { String::new() } else { format!("{}", c.y) };
        s.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{}\n",
            c.x,
            y,
            c.violation_pct,
            c.avg_monthly_violation_pct,
            c.total_irrigation,
            c.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_plan() -> SimulationPlan {
        let mut plan = SimulationPlan::synthetic_default(11, 12);
        if let super::super::DataSource::Synthetic { months, .. } = &mut plan.test {
            *months = 1;
        }
        plan
    }

    #[test]
    fn single_cell_equals_direct_run() {
        let plan = short_plan();
        let grid = SweepGrid { x: vec![33.0], y: vec![3.0] };
        let cells = grid_sweep(SweepFamily::RuleBased, &grid, &plan).unwrap();
        assert_eq!(cells.len(), 1);
        let mut direct = plan.clone();
        direct.controllers = vec![NamedController {
            name: "rb".into(),
            config: ControllerConfig::RuleBased {
                threshold: 33.0,
                dose: 3.0,
            },
        }];
        let out = super::super::run_closed_loop(&direct).unwrap();
        let m = compute_metrics(out.traces.values());
        assert_eq!(cells[0].total_irrigation, m.controllers[0].total_irrigation);
        assert_eq!(cells[0].violation_pct, m.controllers[0].violation_pct);
    }

    #[test]
    fn row_count_and_dose_monotonicity() {
        let plan = short_plan();
        let grid = SweepGrid {
            x: vec![31.0, 33.0],
            y: vec![1.0, 2.0, 3.0, 4.0],
        };
        let cells = grid_sweep(SweepFamily::RuleBased, &grid, &plan).unwrap();
        assert_eq!(cells.len(), 8);
        assert_eq!(sweep_csv(SweepFamily::RuleBased, &cells).lines().count(), 9);
        for row in cells.chunks(4) {
            for w in row.windows(2) {
                assert!(w[1].violation_pct <= w[0].violation_pct + 1e-12, "{:?}", row);
            }
        }
    }
}
