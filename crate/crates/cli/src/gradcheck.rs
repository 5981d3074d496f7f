//! Analytic gradients against central differences.

use std::fmt::Write as _;

use nashpl::game::finite_diff_gradient;
use nashpl::{registry_get, ProblemSpec, PROBLEM_NAMES};
use serde::Serialize;

use crate::{HarnessError, Result};

pub const GRADCHECK_TOL: f64 = 1e-6;
pub const GRADCHECK_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct PlayerRow {
    pub player: usize,
    pub samples: usize,
    pub max_rel_err: f64,
    /// Flat coordinate of the worst disagreement.
    pub worst_coord: Option<usize>,
    pub worst_point: Option<Vec<f64>>,
    pub analytic: Option<f64>,
    pub finite_diff: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub problem: String,
    pub samples: usize,
    pub tol: f64,
    pub step: f64,
    pub players: Vec<PlayerRow>,
    pub warning: Option<String>,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        for r in &self.players {
            let _ = write!(
                s,
                "{:<18} player {:>2}  samples {:>4}  max rel err {:>10.3e}  {}",
                self.problem,
                r.player + 1,
                r.samples,
                r.max_rel_err,
                if r.passed { "PASS" } else { "FAIL" }
            );
            if let (false, Some(c), Some(a), Some(f)) = (r.passed, r.worst_coord, r.analytic, r.finite_diff) {
                let _ = write!(s, "  worst coord {c}: analytic {a:e} vs fd {f:e} at {:?}", r.worst_point.as_deref().unwrap_or(&[]));
            }
            s.push('\n');
        }
        if let Some(w) = &self.warning {
            let _ = writeln!(s, "{:<18} warning: {w}", self.problem);
        }
        s
    }
}

fn rel_err(a: f64, f: f64) -> f64 {
    let e = (a - f).abs() / 1f64.max(a.abs()).max(f.abs());
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

/// Compares every player's full gradient with central differences at
/// `samples` points from the test box.
pub fn gradcheck_problem(spec: &ProblemSpec, samples: usize, seed: u64) -> Result<GradcheckReport> {
    let p = spec.game.as_ref();
    let points = spec.sample_points(samples, seed);
    let mut players: Vec<PlayerRow> = (0..p.num_players())
        .map(|i| PlayerRow {
            player: i,
            samples: points.len(),
            max_rel_err: 0.0,
            worst_coord: None,
            worst_point: None,
            analytic: None,
            finite_diff: None,
            passed: true,
        })
        .collect();
    for x in &points {
        for row in players.iter_mut() {
            let an = p.full_gradient(row.player, x);
            let fd = finite_diff_gradient(p, row.player, x, GRADCHECK_STEP)?;
            for (c, (a, f)) in an.as_slice().iter().zip(fd.as_slice()).enumerate() {
                let e = rel_err(*a, *f);
                if row.worst_coord.is_none() || e > row.max_rel_err {
                    row.max_rel_err = e;
                    row.worst_coord = Some(c);
                    row.worst_point = Some(x.as_slice().to_vec());
                    row.analytic = Some(*a);
                    row.finite_diff = Some(*f);
                }
            }
        }
    }
    for row in players.iter_mut() {
        row.passed = row.max_rel_err <= GRADCHECK_TOL;
    }
    let warning = if points.is_empty() {
        Some("no sample points; the check passes vacuously".into())
    } else if points.len() < samples {
        Some(format!("only {} of {samples} samples had finite objectives", points.len()))
    } else {
        None
    };
    let passed = players.iter().all(|r| r.passed);
    Ok(GradcheckReport { problem: spec.name.clone(), samples, tol: GRADCHECK_TOL, step: GRADCHECK_STEP, players, warning, passed })
}

/// `problem` is a registry name or `all`.
pub fn cmd_gradcheck(problem: &str, samples: usize, seed: u64) -> Result<Vec<GradcheckReport>> {
    let names: Vec<&str> = if problem == "all" {
        PROBLEM_NAMES.to_vec()
    } else if PROBLEM_NAMES.contains(&problem) {
        vec![problem]
    } else {
        return Err(HarnessError::Unknown(format!("unknown problem `{problem}`")));
    };
    names.into_iter().map(|n| gradcheck_problem(&registry_get(n)?, samples, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nashpl::{BlockLayout, FnGame, ProblemConstants, TestBox};
    use std::sync::Arc;

    fn broken() -> ProblemSpec {
        // f_i = (x1 + x2)², but player 2's gradient in x1 is off by 1e-3
        let game = FnGame::new(
            BlockLayout::scalar(2).unwrap(),
            ProblemConstants::unknown(),
            |_, x| (x[0] + x[1]).powi(2),
            |i, x| {
                let s = 2.0 * (x[0] + x[1]);
                if i == 1 {
                    vec![s + 1e-3, s]
                } else {
                    vec![s, s]
                }
            },
        );
        ProblemSpec { name: "broken".into(), game: Arc::new(game), known_ne: None, test_box: TestBox::cube(2, -1.0, 1.0), notes: String::new() }
    }

    #[test]
    fn registered_problems_pass() {
        for rep in cmd_gradcheck("all", 10, 3).unwrap() {
            assert!(rep.passed, "{}", rep.table());
        }
    }

    #[test]
    fn broken_gradient_reports_the_offending_coordinate() {
        let rep = gradcheck_problem(&broken(), 20, 1).unwrap();
        assert!(!rep.passed);
        assert!(rep.players[0].passed);
        let bad = &rep.players[1];
        assert!(!bad.passed);
        assert_eq!(bad.worst_coord, Some(0));
        assert!(rep.table().contains("worst coord 0"));
    }

    #[test]
    fn zero_samples_pass_vacuously_with_a_warning() {
        let rep = gradcheck_problem(&broken(), 0, 1).unwrap();
        assert!(rep.passed);
        assert!(rep.warning.is_some());
    }

    #[test]
    fn unknown_problem_exit_code() {
        assert_eq!(cmd_gradcheck("f9", 1, 1).unwrap_err().exit_code(), crate::EXIT_UNKNOWN);
    }
}
