//! The `verify` command: the sampled inequality battery.

use std::collections::BTreeMap;

use nashpl::diagnostics::{
    abr_accuracy_check, gap_nonnegativity, kappa_global_bound_check, ne_certification, residual_from_gap_check,
    sandwich_check, smoothness_probe, verify_contraction_theorems, CheckReport, ContractionReport, Theorem,
};
use nashpl::lqgame::{lq_cost_and_gradient, multiconvexity_counterexample, CostGradient};
use nashpl::{registry_get, BlockVector, Game, ProblemSpec, Provenance, PROBLEM_NAMES};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::{HarnessError, Result};

pub const LEMMAS: [&str; 9] = [
    "sandwich",
    "gap-nonnegativity",
    "residual",
    "smoothness",
    "kappa",
    "abr-accuracy",
    "contraction",
    "equilibria",
    "lq-counterexample",
];

/// Every accepted scope: `all`, a lemma name or a problem name.
pub const SCOPES: &str = "all | sandwich | gap-nonnegativity | residual | smoothness | kappa | abr-accuracy | contraction | equilibria | lq-counterexample | <problem>";

pub const SANDWICH_SLACK: f64 = 1e-9;
pub const GAP_SLACK: f64 = 1e-9;
pub const CONTRACTION_SLACK: f64 = 1e-10;
pub const ABR_DELTAS: [f64; 3] = [1e-2, 1e-4, 1e-6];
/// States kept per encountered case in the contraction checks.
pub const STATES_PER_CASE: usize = 50;
/// `(γ, C)` settings for the adaptive contraction checks.
pub const ADAPTIVE_SETTINGS: [(f64, f64); 2] = [(0.5, 0.5), (0.1, 0.5)];

/// Global `κ` with `A <= κD` everywhere, where one is known in closed form.
pub fn known_kappa(problem: &str) -> Option<f64> {
    match problem {
        "f4" | "resource" => Some(-1.0),
        "f6" => Some(0.5),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub lemma: String,
    pub problem: String,
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    pub worst_excess: f64,
    pub worst_point: Option<Vec<f64>>,
    pub passed: bool,
    pub details: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Skip {
    pub lemma: String,
    pub problem: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub scope: String,
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<CheckEntry>,
    pub skipped: Vec<Skip>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn entry(lemma: &str, problem: &str, rep: CheckReport, details: Value) -> CheckEntry {
    CheckEntry {
        lemma: lemma.into(),
        problem: problem.into(),
        passed: rep.passed(),
        name: rep.name,
        checked: rep.checked,
        violations: rep.violations,
        worst_excess: rep.worst_excess,
        worst_point: rep.worst_point,
        details,
    }
}

/// Checks each pool state on its own and keeps up to `per_case` states of
/// every case tag, in pool order.
pub fn contraction_per_case(p: &dyn Game, theorem: Theorem, pool: &[BlockVector], per_case: usize) -> Result<ContractionReport> {
    let single = pool
        .par_iter()
        .map(|x| verify_contraction_theorems(p, theorem, std::slice::from_ref(x), CONTRACTION_SLACK))
        .collect::<nashpl::Result<Vec<_>>>()?;
    let mut merged = ContractionReport { theorem, checked: 0, case_counts: BTreeMap::new(), violations: Vec::new(), soft_violations: Vec::new() };
    for r in single {
        let Some(tag) = r.case_counts.keys().next() else { continue };
        let count = merged.case_counts.entry(tag.clone()).or_default();
        if *count >= per_case {
            continue;
        }
        *count += 1;
        merged.checked += 1;
        merged.violations.extend(r.violations);
        merged.soft_violations.extend(r.soft_violations);
    }
    Ok(merged)
}

fn contraction_entry(problem: &str, rep: &ContractionReport) -> CheckEntry {
    let worst = rep.violations.iter().max_by(|a, b| (a.expected - a.bound).total_cmp(&(b.expected - b.bound)));
    CheckEntry {
        lemma: "contraction".into(),
        problem: problem.into(),
        name: format!("{:?}", rep.theorem),
        checked: rep.checked,
        violations: rep.violations.len(),
        worst_excess: worst.map_or(f64::NEG_INFINITY, |v| v.expected - v.bound),
        worst_point: worst.map(|v| v.state.clone()),
        passed: rep.passed(),
        details: json!({
            "case_counts": rep.case_counts,
            "soft_violations": rep.soft_violations.len(),
            "violating_states": rep.violations,
        }),
    }
}

/// Finite cost at `K1` and `K1'` but not at their midpoint.
pub fn lq_counterexample_entry() -> Result<CheckEntry> {
    let (spec, k1, k1p, k2) = multiconvexity_counterexample();
    let cost = |k: &nalgebra::DMatrix<f64>| -> Result<Option<f64>> {
        Ok(match lq_cost_and_gradient(&spec, &[k.clone(), k2.clone()], 0)? {
            CostGradient::Finite { cost, .. } => Some(cost),
            CostGradient::Infinite => None,
        })
    };
    let mid = (&k1 + &k1p) * 0.5;
    let (a, b, m) = (cost(&k1)?, cost(&k1p)?, cost(&mid)?);
    let ok = a.is_some() && b.is_some() && m.is_none();
    Ok(CheckEntry {
        lemma: "lq-counterexample".into(),
        problem: "lq".into(),
        name: "stable endpoints, unstable midpoint".into(),
        checked: 3,
        violations: usize::from(!ok),
        worst_excess: if ok { 0.0 } else { f64::INFINITY },
        worst_point: None,
        passed: ok,
        details: json!({ "k1": a, "k1_prime": b, "midpoint": m }),
    })
}

struct Battery {
    samples: usize,
    seed: u64,
    checks: Vec<CheckEntry>,
    skipped: Vec<Skip>,
}

impl Battery {
    fn skip(&mut self, lemma: &str, problem: &str, reason: &str) {
        self.skipped.push(Skip { lemma: lemma.into(), problem: problem.into(), reason: reason.into() });
    }

    fn run(&mut self, lemma: &str, spec: &ProblemSpec) -> Result<()> {
        let p = spec.game.as_ref();
        let name = spec.name.as_str();
        let consts = p.constants();
        let needs_bounds = matches!(lemma, "sandwich" | "residual" | "smoothness" | "kappa" | "abr-accuracy" | "contraction");
        if (needs_bounds || lemma == "gap-nonnegativity") && !p.has_best_response() {
            self.skip(lemma, name, "no exact best response");
            return Ok(());
        }
        if needs_bounds && consts.provenance != Provenance::Analytic {
            self.skip(lemma, name, "constants are not analytic, so the bounds are not certificates");
            return Ok(());
        }
        // LQ evaluations solve Lyapunov equations, so sample fewer points there
        let samples = if name == "lq" { self.samples.min(50) } else { self.samples };
        let pts = || spec.sample_points(samples, self.seed);
        match lemma {
            "sandwich" => {
                let rep = sandwich_check(p, &pts(), SANDWICH_SLACK)?;
                self.checks.push(entry(lemma, name, rep, json!({ "l": consts.l, "mu": consts.mu, "slack": SANDWICH_SLACK })));
            }
            "gap-nonnegativity" => {
                let rep = gap_nonnegativity(p, &pts(), GAP_SLACK)?;
                self.checks.push(entry(lemma, name, rep, json!({ "slack": GAP_SLACK })));
            }
            "residual" => {
                let rep = residual_from_gap_check(p, &pts())?;
                self.checks.push(entry(lemma, name, rep, json!({ "l": consts.l })));
            }
            "smoothness" => {
                let rep = smoothness_probe(p, &pts())?;
                self.checks.push(entry(lemma, name, rep, json!({ "l_prime": consts.l_prime() })));
            }
            "kappa" => {
                let k = kappa_global_bound_check(p, &pts())?;
                let details = json!({ "min_ratio": k.min_ratio, "max_ratio": k.max_ratio });
                self.checks.push(entry(lemma, name, k.a_bound, details.clone()));
                self.checks.push(entry(lemma, name, k.b_bound, details));
            }
            "abr-accuracy" => {
                let pts = pts();
                for delta in ABR_DELTAS {
                    let rep = abr_accuracy_check(p, &pts, delta)?;
                    self.checks.push(entry(lemma, name, rep, json!({ "delta": delta })));
                }
            }
            "contraction" => {
                let pool = spec.sample_points(samples.max(STATES_PER_CASE) * 4, self.seed);
                let mut theorems: Vec<Theorem> = known_kappa(name).map(|kappa| Theorem::Rbcd { kappa }).into_iter().collect();
                for (gamma, c) in ADAPTIVE_SETTINGS {
                    theorems.push(Theorem::Ideal { gamma, c });
                    theorems.push(Theorem::Practical { gamma, c });
                }
                for th in theorems {
                    let rep = contraction_per_case(p, th, &pool, STATES_PER_CASE)?;
                    self.checks.push(contraction_entry(name, &rep));
                }
            }
            "equilibria" => {
                if spec.known_ne.is_none() {
                    self.skip(lemma, name, "no known equilibrium");
                } else {
                    let rep = ne_certification(spec, 1e-9, 1e-10)?;
                    self.checks.push(entry(lemma, name, rep, json!({ "residual_tol": 1e-9, "gap_tol": 1e-10 })));
                }
            }
            "lq-counterexample" => {
                if name == "lq" {
                    self.checks.push(lq_counterexample_entry()?);
                }
            }
            _ => unreachable!("lemma names are validated by cmd_verify"),
        }
        Ok(())
    }
}

/// Runs the battery for `scope`: every lemma on every problem, one lemma on
/// every problem, or every lemma on one problem.
pub fn cmd_verify(scope: &str, samples: usize, seed: u64) -> Result<VerifyReport> {
    let (lemmas, problems): (Vec<&str>, Vec<&str>) = if scope == "all" {
        (LEMMAS.to_vec(), PROBLEM_NAMES.to_vec())
    } else if LEMMAS.contains(&scope) {
        let problems = if scope == "lq-counterexample" { vec!["lq"] } else { PROBLEM_NAMES.to_vec() };
        (vec![scope], problems)
    } else if PROBLEM_NAMES.contains(&scope) {
        (LEMMAS.to_vec(), vec![scope])
    } else {
        return Err(HarnessError::Unknown(format!("unknown verify scope `{scope}`; expected {SCOPES}")));
    };
    let mut battery = Battery { samples, seed, checks: Vec::new(), skipped: Vec::new() };
    for problem in problems {
        let spec = registry_get(problem)?;
        for &lemma in &lemmas {
            battery.run(lemma, &spec)?;
        }
    }
    let passed = battery.checks.iter().all(|c| c.passed);
    Ok(VerifyReport { scope: scope.into(), samples, seed, checks: battery.checks, skipped: battery.skipped, passed })
}
