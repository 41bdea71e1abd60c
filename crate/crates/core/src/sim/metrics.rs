use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ClosedLoopTrace;

/// Moisture below `x_min − VIOLATION_TOL` counts as a violation.
pub const VIOLATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthMetrics {
    /// `YYYY-MM` of the period start.
    pub month: String,
    pub periods: usize,
    pub irrigation: f64,
    /// `Σ c x_t`, the runoff and percolation loss.
    pub loss: f64,
    pub violations: usize,
    pub violation_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerMetrics {
    pub controller: String,
    pub kind: String,
    pub months: Vec<MonthMetrics>,
    pub periods: usize,
    pub total_irrigation: f64,
    pub total_loss: f64,
    pub violation_pct: f64,
    /// Mean of the monthly violation percentages.
    pub avg_monthly_violation_pct: f64,
    pub avg_solve_time: f64,
    pub max_solve_time: f64,
    pub soft_fallbacks: usize,
    pub clamp_events: usize,
    pub completed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    pub controllers: Vec<ControllerMetrics>,
}

/// Monthly irrigation, loss and violation statistics per trace.
pub fn compute_metrics<'a>(traces: impl IntoIterator<Item = &'a ClosedLoopTrace>) -> MetricsReport {
    MetricsReport {
        controllers: traces.into_iter().map(controller_metrics).collect(),
    }
}

fn controller_metrics(trace: &ClosedLoopTrace) -> ControllerMetrics {
    let mut months: Vec<MonthMetrics> = Vec::new();
    let mut solve_total = 0.0;
    let mut solve_max: f64 = 0.0;
    let mut solves = 0usize;
    for r in &trace.rows {
        let key = r.timestamp.format("%Y-%m").to_string();
        if months.last().is_none_or(|m| m.month != key) {
            months.push(MonthMetrics {
                month: key,
                periods: 0,
                irrigation: 0.0,
                loss: 0.0,
                violations: 0,
                violation_pct: 0.0,
            });
        }
        let m = months.last_mut().expect("pushed above");
        m.periods += 1;
        m.irrigation += r.u;
        m.loss += trace.c * r.x;
        if r.x < trace.x_min - VIOLATION_TOL {
            m.violations += 1;
        }
        if r.status != crate::control::DecisionStatus::Rule {
            solves += 1;
            solve_total += r.solve_time;
            solve_max = solve_max.max(r.solve_time);
        }
    }
    for m in &mut months {
        m.violation_pct = 100.0 * m.violations as f64 / m.periods as f64;
    }
    let periods = trace.rows.len();
    let violations: usize = months.iter().map(|m| m.violations).sum();
    ControllerMetrics {
        controller: trace.controller.clone(),
        kind: trace.kind.clone(),
        periods,
        total_irrigation: months.iter().map(|m| m.irrigation).sum(),
        total_loss: months.iter().map(|m| m.loss).sum(),
        violation_pct: if periods == 0 { 0.0 } else { 100.0 * violations as f64 / periods as f64 },
        avg_monthly_violation_pct: if months.is_empty() {
            0.0
        } else {
            months.iter().map(|m| m.violation_pct).sum::<f64>() / months.len() as f64
        },
        avg_solve_time: if solves == 0 { 0.0 } else { solve_total / solves as f64 },
        max_solve_time: solve_max,
        soft_fallbacks: trace
            .rows
            .iter()
            .filter(|r| r.status == crate::control::DecisionStatus::SoftFallback)
            .count(),
        clamp_events: trace.clamp_events(),
        completed: trace.error.is_none(),
        error: trace.error.clone(),
        months,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportTable {
    Irrigation,
    Loss,
    Violation,
}

impl ReportTable {
    pub const ALL: [ReportTable; 3] = [ReportTable::Irrigation, ReportTable::Loss, ReportTable::Violation];

    pub fn title(self) -> &'static str {
        match self {
            ReportTable::Irrigation => "Irrigation amounts (mm)",
            ReportTable::Loss => "Water loss due to runoff and percolation (mm)",
            ReportTable::Violation => "Probabilities of constraint violations (%)",
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            ReportTable::Irrigation => "irrigation",
            ReportTable::Loss => "loss",
            ReportTable::Violation => "violation",
        }
    }

    fn last_column(self) -> &'static str {
        match self {
            ReportTable::Violation => "Average",
            _ => "Total",
        }
    }

    fn value(self, m: &MonthMetrics) -> f64 {
        match self {
            ReportTable::Irrigation => m.irrigation,
            ReportTable::Loss => m.loss,
            ReportTable::Violation => m.violation_pct,
        }
    }

    fn summary(self, c: &ControllerMetrics) -> f64 {
        match self {
            ReportTable::Irrigation => c.total_irrigation,
            ReportTable::Loss => c.total_loss,
            ReportTable::Violation => c.avg_monthly_violation_pct,
        }
    }
}

impl MetricsReport {
    pub fn get(&self, controller: &str) -> Option<&ControllerMetrics> {
        self.controllers.iter().find(|c| c.controller == controller)
    }

    /// Months in order of first appearance over all controllers.
    pub fn month_keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = Vec::new();
        for c in &self.controllers {
            for m in &c.months {
                if !keys.contains(&m.month) {
                    keys.push(m.month.clone());
                }
            }
        }
        keys.sort();
        keys
    }

    /// Copy with every timing field zeroed.
    pub fn without_timing(&self) -> MetricsReport {
        let mut r = self.clone();
        for c in &mut r.controllers {
            c.avg_solve_time = 0.0;
            c.max_solve_time = 0.0;
        }
        r
    }

    fn rows(&self, table: ReportTable) -> (Vec<String>, Vec<Vec<String>>) {
        let keys = self.month_keys();
        let mut header = vec!["controller".to_string()];
        header.extend(keys.iter().cloned());
        header.push(table.last_column().to_string());
        let rows = self
            .controllers
            .iter()
            .map(|c| {
                let mut row = vec![c.controller.clone()];
                for k in &keys {
                    row.push(match c.months.iter().find(|m| &m.month == k) {
                        Some(m) => format!("{:.2}", table.value(m)),
                        None => "-".into(),
                    });
                }
                row.push(format!("{:.2}", table.summary(c)));
                row
            })
            .collect();
        (header, rows)
    }

    pub fn render_csv(&self, table: ReportTable) -> String {
        let (header, rows) = self.rows(table);
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    /// The three monthly tables, without timing columns.
    pub fn render_markdown(&self) -> String {
        let mut s = String::new();
        for t in ReportTable::ALL {
            let (header, rows) = self.rows(t);
            let _ = writeln!(s, "### {}\n", t.title());
            let _ = writeln!(s, "| {} |", header.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
            for r in rows {
                let _ = writeln!(s, "| {} |", r.join(" | "));
            }
            s.push('\n');
        }
        let incomplete: Vec<_> = self.controllers.iter().filter(|c| !c.completed).collect();
        if !incomplete.is_empty() {
            let _ = writeln!(s, "### Incomplete runs\n");
            for c in incomplete {
                let _ = writeln!(s, "- {}: {}", c.controller, c.error.as_deref().unwrap_or("unknown error"));
            }
            s.push('\n');
        }
        s
    }

    /// Solve-time summary for the MPC controllers.
    pub fn render_timing_markdown(&self) -> String {
        let mut s = String::from("| controller | avg solve time (s) | max solve time (s) | soft fallbacks |\n|---|---|---|---|\n");
        for c in self.controllers.iter().filter(|c| c.avg_solve_time > 0.0) {
            let _ = writeln!(
                s,
                "| {} | {:.3} | {:.3} | {} |",
                c.controller, c.avg_solve_time, c.max_solve_time, c.soft_fallbacks
            );
        }
        s
    }
}
