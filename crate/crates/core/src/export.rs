//! Plot-ready CSV and JSON renderings. Numbers print with 12 significant
//! digits so reruns with identical inputs give identical files.

use serde_json::{json, Value};

use crate::bridge::BridgeProfile;
use crate::cell::StationaryBranch;
use crate::effective::{EffectiveHamiltonian, Gap};
use crate::env::GrowthEnvelopes;
use crate::ergodic::RegimeEstimate;
use crate::ode::OdeSolution;
use crate::pde::PdeRun;

/// `x` with 12 significant digits in scientific notation.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        // Avoid "-0.00000000000e0".
        return "0.00000000000e0".to_string();
    }
    format!("{x:.11e}")
}

struct Table {
    out: String,
}

impl Table {
    fn new(header: &str) -> Self {
        Self { out: format!("{header}\n") }
    }
    fn row(&mut self, fields: &[String]) {
        self.out.push_str(&fields.join(","));
        self.out.push('\n');
    }
    fn finish(self) -> String {
        self.out
    }
}

pub fn envelopes_csv(e: &GrowthEnvelopes) -> String {
    let mut t = Table::new("p,gl,gu");
    for ((p, gl), gu) in e.p_grid.iter().zip(&e.gl_values).zip(&e.gu_values) {
        t.row(&[num(*p), num(*gl), num(*gu)]);
    }
    t.finish()
}

pub fn solution_csv(s: &OdeSolution) -> String {
    let mut t = Table::new("x,f");
    for (x, f) in s.x_nodes.iter().zip(&s.f_values) {
        t.row(&[num(*x), num(*f)]);
    }
    t.finish()
}

pub fn branch_catalog_csv(branches: &[StationaryBranch]) -> String {
    let mut t = Table::new("lambda,theta,p0,stability");
    for b in branches {
        t.row(&[num(b.lambda), num(b.theta), num(b.initial_value), b.stability_index.to_string()]);
    }
    t.finish()
}

/// Samples outside gaps are region `E`; each gap contributes its plateau
/// endpoints as region `gap_<index>`.
pub fn effective_csv(eff: &EffectiveHamiltonian) -> String {
    let mut rows: Vec<(f64, f64, String)> = eff
        .samples
        .iter()
        .filter(|s| !eff.gaps.iter().any(|g| s.theta > g.theta_left && s.theta < g.theta_right))
        .map(|s| (s.theta, s.lambda, "E".to_string()))
        .collect();
    for (j, g) in eff.gaps.iter().enumerate() {
        for theta in [g.theta_left, 0.5 * (g.theta_left + g.theta_right), g.theta_right] {
            rows.push((theta, g.lambda_bar, format!("gap_{j}")));
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut t = Table::new("theta,hbar,region");
    for (theta, hbar, region) in rows {
        t.row(&[num(theta), num(hbar), region]);
    }
    t.finish()
}

pub fn gap_inventory_json(gaps: &[Gap]) -> Value {
    Value::Array(
        gaps.iter()
            .map(|g| {
                json!({
                    "theta_L": g.theta_left,
                    "theta_R": g.theta_right,
                    "lambda_bar": g.lambda_bar,
                    "endpoint_mismatch": g.endpoint_mismatch,
                })
            })
            .collect(),
    )
}

pub fn bridge_csv(p: &BridgeProfile) -> String {
    let mut t = Table::new("x,f,F,piece");
    for s in &p.samples {
        t.row(&[num(s.x), num(s.f), num(s.big_f), s.piece.as_str().to_string()]);
    }
    t.finish()
}

pub fn probe_csv(run: &PdeRun) -> String {
    let mut t = Table::new("t,u0,u0_over_t");
    for r in &run.probe {
        let ratio = if r.t > 0.0 { num(r.u / r.t) } else { String::new() };
        t.row(&[num(r.t), num(r.u), ratio]);
    }
    t.finish()
}

pub fn profile_csv(xs: &[f64], u: &[f64]) -> String {
    let mut t = Table::new("x,u");
    for (x, v) in xs.iter().zip(u) {
        t.row(&[num(*x), num(*v)]);
    }
    t.finish()
}

pub fn pde_manifest_json(run: &PdeRun) -> Value {
    json!({
        "epsilon": run.epsilon,
        "grid": run.grid,
        "boundary_mode": run.mode,
        "certificate": run.certificate,
        "max_gradient": run.max_gradient,
        "steps": run.steps,
    })
}

pub fn ergodic_csv(rows: &[RegimeEstimate]) -> String {
    let mut t = Table::new("lambda,theta_hat,ci,seed_count,window");
    for r in rows {
        t.row(&[num(r.lambda), num(r.theta_hat), num(r.ci), r.seed_count.to_string(), num(r.window)]);
    }
    t.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(1.0), "1.00000000000e0");
        assert_eq!(num(-0.0), "0.00000000000e0");
        assert_eq!(num(std::f64::consts::PI), "3.14159265359e0");
        let back: f64 = num(1.0 / 3.0).parse().unwrap();
        assert!((back - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_table_has_header_and_rows() {
        let e = GrowthEnvelopes {
            p_grid: vec![-1.0, 0.0, 1.0],
            gl_values: vec![1.0, 0.0, 1.0],
            gu_values: vec![2.0, 1.0, 2.0],
            dominance_tolerance: 0.0,
        };
        let csv = envelopes_csv(&e);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "p,gl,gu");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "0.00000000000e0,0.00000000000e0,1.00000000000e0");
    }
}
