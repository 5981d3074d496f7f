//! Random, cyclic and adaptive block-coordinate descent for Nash equilibria.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bestresponse::{abr, best_responses_or_abr, exact_best_responses, gap, BestResponseResult};
use crate::blockvec::{dot, sq_norm, BlockVector};
use crate::error::{Error, Result};
use crate::game::{check_point, grad_f_minus_all, own_gradients, stationarity_residual, sum_f, Game, ProblemConstants};

/// Iterates whose norm exceeds this are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Rbcd,
    Cyclic,
    IaRbcd,
    ARbcd,
    Bm2,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Rbcd, Variant::Cyclic, Variant::IaRbcd, Variant::ARbcd, Variant::Bm2];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Rbcd => "rbcd",
            Variant::Cyclic => "cyclic",
            Variant::IaRbcd => "ia_rbcd",
            Variant::ARbcd => "a_rbcd",
            Variant::Bm2 => "bm2",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown solver variant `{s}`")))
    }
}

/// Case-2 threshold: `(B-A)² >= C A²` or the twice-stricter `>= 2C A²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threshold {
    Ideal,
    Practical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseTag {
    Case1,
    Case2,
    Case3,
    Converged,
}

impl CaseTag {
    pub fn name(self) -> &'static str {
        match self {
            CaseTag::Case1 => "Case1",
            CaseTag::Case2 => "Case2",
            CaseTag::Case3 => "Case3",
            CaseTag::Converged => "Converged",
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseDecision {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub tag: CaseTag,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub c: f64,
    /// Outer iterations (sweeps for the cyclic variant).
    pub t: usize,
    pub t_prime: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Early exit once the stationarity residual drops to this level.
    pub tol: f64,
    /// `D` at or below this marks a state as converged in case selection.
    pub case_tol: f64,
    /// Keep every iterate in [`RunResult::points`].
    pub record_points: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: 0.1,
            gamma: 0.5,
            c: 0.5,
            t: 1000,
            t_prime: 50,
            seed: 0,
            variant: Variant::Rbcd,
            tol: 1e-9,
            case_tol: 1e-18,
            record_points: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("C must be positive, got {}", self.c));
        }
        if !(self.tol >= 0.0 && self.case_tol >= 0.0) {
            return bad("tolerances must be non-negative".into());
        }
        Ok(())
    }
}

/// One logged state. Record 0 is the start; record `t` is the state after
/// update `t`, tagged with the block and case that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Zero-based block index; `None` for the start and cyclic sweeps.
    pub block: Option<usize>,
    pub tag: Option<CaseTag>,
    pub k: Option<f64>,
    pub gap: f64,
    /// `Σ_i ‖∇_i f_i‖²`.
    pub grad_sq: f64,
    /// `F(x) = Σ_i f_i(x)`.
    pub sum_f: f64,
    /// Gap from ABR responses when the update uses ABR and exact responses
    /// are used for measurement.
    pub approx_gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Budget,
    Converged,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace: Vec<IterationRecord>,
    pub final_point: BlockVector,
    pub status: RunStatus,
    pub final_residual: f64,
    /// Iterates in trace order, when requested.
    pub points: Vec<Vec<f64>>,
}

/// `(A, B, D)` with `A = Σ⟨∇_iG - ∇_iF_{-i}, ∇_if_i⟩`, `B = Σ‖∇_iG - ∇_iF_{-i}‖²`,
/// `D = Σ‖∇_if_i‖²`, where `∇G` comes from `br`.
pub fn case_quantities(p: &dyn Game, x: &BlockVector, br: &BestResponseResult) -> Result<(f64, f64, f64)> {
    check_point(p, x)?;
    let (own, cross) = (own_gradients(p, x), grad_f_minus_all(p, x));
    let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
    for i in 0..p.num_players() {
        let v = correction(br, &cross, i)?;
        a += dot(&v, &own[i]);
        b += sq_norm(&v);
        d += sq_norm(&own[i]);
    }
    Ok((a, b, d))
}

/// `∇_i G - ∇_i F_{-i}` for player `i`.
fn correction(br: &BestResponseResult, cross: &[Vec<f64>], i: usize) -> Result<Vec<f64>> {
    Ok(br.grad_g.block(i)?.iter().zip(&cross[i]).map(|(g, c)| g - c).collect())
}

/// Picks the update regime from `(A, B, D)`.
pub fn select_case(a: f64, b: f64, d: f64, gamma: f64, c: f64, threshold: Threshold, tol: f64) -> CaseDecision {
    let decision = |tag, k| CaseDecision { a, b, d, tag, k };
    if d <= tol {
        return decision(CaseTag::Converged, 0.0);
    }
    if a <= gamma * d {
        return decision(CaseTag::Case1, 0.0);
    }
    let factor = match threshold {
        Threshold::Ideal => c,
        Threshold::Practical => 2.0 * c,
    };
    if (b - a).powi(2) >= factor * a * a {
        if b <= tol {
            // the Case-2 coefficient is undefined; a plain step still descends
            return decision(CaseTag::Case1, 0.0);
        }
        return decision(CaseTag::Case2, -2.0 + a / b);
    }
    decision(CaseTag::Case3, -1.0)
}

/// What a variant does at a state, independent of the sampled block.
struct StepPlan {
    own: Vec<Vec<f64>>,
    correction: Option<Vec<Vec<f64>>>,
    decision: Option<CaseDecision>,
}

impl StepPlan {
    fn direction(&self, i: usize) -> Vec<f64> {
        match (&self.correction, self.decision) {
            (Some(corr), Some(dec)) if dec.k != 0.0 => {
                self.own[i].iter().zip(&corr[i]).map(|(g, v)| g + dec.k * v).collect()
            }
            _ => self.own[i].clone(),
        }
    }

    fn converged(&self) -> bool {
        matches!(self.decision, Some(d) if d.tag == CaseTag::Converged)
    }
}

fn plan(p: &dyn Game, x: &BlockVector, cfg: &SolverConfig, variant: Variant, exact: Option<&BestResponseResult>) -> Result<StepPlan> {
    let own = own_gradients(p, x);
    let adaptive = |br: &BestResponseResult, threshold: Option<Threshold>| -> Result<StepPlan> {
        let cross = grad_f_minus_all(p, x);
        let corr = (0..p.num_players()).map(|i| correction(br, &cross, i)).collect::<Result<Vec<_>>>()?;
        let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
        for i in 0..p.num_players() {
            a += dot(&corr[i], &own[i]);
            b += sq_norm(&corr[i]);
            d += sq_norm(&own[i]);
        }
        let decision = match threshold {
            Some(th) => select_case(a, b, d, cfg.gamma, cfg.c, th, cfg.case_tol),
            None => {
                let tag = if d <= cfg.case_tol { CaseTag::Converged } else { CaseTag::Case3 };
                CaseDecision { a, b, d, tag, k: if tag == CaseTag::Converged { 0.0 } else { -1.0 } }
            }
        };
        Ok(StepPlan { own: own.clone(), correction: Some(corr), decision: Some(decision) })
    };
    match variant {
        Variant::Rbcd | Variant::Cyclic => Ok(StepPlan { own, correction: None, decision: None }),
        Variant::IaRbcd => {
            let owned;
            let br = match exact {
                Some(b) => b,
                None => {
                    owned = exact_best_responses(p, x)?;
                    &owned
                }
            };
            adaptive(br, Some(Threshold::Ideal))
        }
        Variant::ARbcd => adaptive(&abr(p, x, cfg.beta, cfg.t_prime)?, Some(Threshold::Practical)),
        Variant::Bm2 => adaptive(&abr(p, x, cfg.beta, cfg.t_prime)?, None),
    }
}

struct Measured {
    gap: f64,
    grad_sq: f64,
    sum_f: f64,
    residual: f64,
    approx_gap: Option<f64>,
    exact: Option<BestResponseResult>,
}

fn measure(p: &dyn Game, x: &BlockVector, cfg: &SolverConfig, variant: Variant) -> Result<Measured> {
    let grad_sq: f64 = own_gradients(p, x).iter().map(|g| sq_norm(g)).sum();
    let residual = stationarity_residual(p, x);
    let total = sum_f(p, x);
    if !total.is_finite() {
        // outside the domain (e.g. a destabilizing LQ profile); responses are undefined
        return Ok(Measured { gap: f64::INFINITY, grad_sq, sum_f: total, residual: f64::INFINITY, approx_gap: None, exact: None });
    }
    let br = best_responses_or_abr(p, x, cfg.beta, cfg.t_prime)?;
    let g = gap(p, x, &br);
    let uses_abr = matches!(variant, Variant::ARbcd | Variant::Bm2);
    let approx_gap = if uses_abr && p.has_best_response() {
        Some(gap(p, x, &abr(p, x, cfg.beta, cfg.t_prime)?))
    } else {
        None
    };
    let exact = p.has_best_response().then_some(br);
    Ok(Measured { gap: g, grad_sq, sum_f: total, residual, approx_gap, exact })
}

fn diverged(x: &BlockVector, gap: f64) -> bool {
    !x.is_finite() || x.norms().norm > DIVERGENCE_NORM || gap.is_nan() || gap == f64::INFINITY
}

fn draw_block(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let u: f64 = rng.gen();
    ((n as f64 * u).floor() as usize).min(n - 1)
}

/// Runs `cfg.variant` from `x0`.
pub fn run(p: &dyn Game, x0: &BlockVector, cfg: &SolverConfig) -> Result<RunResult> {
    cfg.validate()?;
    check_point(p, x0)?;
    if cfg.variant == Variant::IaRbcd && !p.has_best_response() {
        return Err(Error::NoBestResponse(0));
    }
    if cfg.variant == Variant::Cyclic {
        return run_cyclic(p, x0, cfg);
    }
    let n = p.num_players();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = x0.clone();
    let mut m = measure(p, &x, cfg, cfg.variant)?;
    let mut trace = vec![IterationRecord { iter: 0, block: None, tag: None, k: None, gap: m.gap, grad_sq: m.grad_sq, sum_f: m.sum_f, approx_gap: m.approx_gap }];
    let mut points = if cfg.record_points { vec![x.as_slice().to_vec()] } else { Vec::new() };
    let mut status = RunStatus::Budget;
    if diverged(&x, m.gap) {
        status = RunStatus::Diverged;
    }
    for t in 1..=cfg.t {
        if status != RunStatus::Budget {
            break;
        }
        if m.residual <= cfg.tol {
            status = RunStatus::Converged;
            break;
        }
        let i = draw_block(&mut rng, n);
        let step = plan(p, &x, cfg, cfg.variant, m.exact.as_ref())?;
        if step.converged() {
            status = RunStatus::Converged;
            break;
        }
        x.axpy_block(i, -cfg.alpha, &step.direction(i))?;
        m = measure(p, &x, cfg, cfg.variant)?;
        trace.push(IterationRecord {
            iter: t,
            block: Some(i),
            tag: step.decision.map(|d| d.tag),
            k: step.decision.map(|d| d.k),
            gap: m.gap,
            grad_sq: m.grad_sq,
            sum_f: m.sum_f,
            approx_gap: m.approx_gap,
        });
        if cfg.record_points {
            points.push(x.as_slice().to_vec());
        }
        if diverged(&x, m.gap) {
            status = RunStatus::Diverged;
        }
    }
    if status == RunStatus::Budget && m.residual <= cfg.tol {
        status = RunStatus::Converged;
    }
    Ok(RunResult { trace, final_residual: m.residual, final_point: x, status, points })
}

fn run_cyclic(p: &dyn Game, x0: &BlockVector, cfg: &SolverConfig) -> Result<RunResult> {
    let mut x = x0.clone();
    let mut m = measure(p, &x, cfg, Variant::Cyclic)?;
    let mut trace = vec![IterationRecord { iter: 0, block: None, tag: None, k: None, gap: m.gap, grad_sq: m.grad_sq, sum_f: m.sum_f, approx_gap: None }];
    let mut points = if cfg.record_points { vec![x.as_slice().to_vec()] } else { Vec::new() };
    let mut status = if diverged(&x, m.gap) { RunStatus::Diverged } else { RunStatus::Budget };
    for t in 1..=cfg.t {
        if status != RunStatus::Budget {
            break;
        }
        if m.residual <= cfg.tol {
            status = RunStatus::Converged;
            break;
        }
        for i in 0..p.num_players() {
            let g = p.own_gradient(i, &x);
            x.axpy_block(i, -cfg.alpha, &g)?;
        }
        m = measure(p, &x, cfg, Variant::Cyclic)?;
        trace.push(IterationRecord { iter: t, block: None, tag: None, k: None, gap: m.gap, grad_sq: m.grad_sq, sum_f: m.sum_f, approx_gap: None });
        if cfg.record_points {
            points.push(x.as_slice().to_vec());
        }
        if diverged(&x, m.gap) {
            status = RunStatus::Diverged;
        }
    }
    if status == RunStatus::Budget && m.residual <= cfg.tol {
        status = RunStatus::Converged;
    }
    Ok(RunResult { trace, final_residual: m.residual, final_point: x, status, points })
}

pub fn run_rbcd(p: &dyn Game, x0: &BlockVector, cfg: &SolverConfig) -> Result<RunResult> {
    run(p, x0, &SolverConfig { variant: Variant::Rbcd, ..cfg.clone() })
}

pub fn run_cyclic_bcd(p: &dyn Game, x0: &BlockVector, cfg: &SolverConfig) -> Result<RunResult> {
    run(p, x0, &SolverConfig { variant: Variant::Cyclic, ..cfg.clone() })
}

pub fn run_ia_rbcd(p: &dyn Game, x0: &BlockVector, cfg: &SolverConfig) -> Result<RunResult> {
    run(p, x0, &SolverConfig { variant: Variant::IaRbcd, ..cfg.clone() })
}

pub fn run_a_rbcd(p: &dyn Game, x0: &BlockVector, cfg: &SolverConfig) -> Result<RunResult> {
    run(p, x0, &SolverConfig { variant: Variant::ARbcd, ..cfg.clone() })
}

pub fn run_bm2(p: &dyn Game, x0: &BlockVector, cfg: &SolverConfig) -> Result<RunResult> {
    run(p, x0, &SolverConfig { variant: Variant::Bm2, ..cfg.clone() })
}

/// Literal step-size bounds of the convergence theorems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    /// `(1-κ)/(n(L+L'))`, when κ is supplied.
    pub rbcd: Option<f64>,
    /// `(1-γ)/(n(L+L'))`.
    pub case1: f64,
    /// `min{1, C}/(2n(L+L'))`.
    pub case2: f64,
    /// `1/(n(L+L'))`.
    pub case3: f64,
    /// Minimum of the three case bounds.
    pub alpha: f64,
    /// `1/L`.
    pub beta: f64,
}

pub fn theorem_step_sizes(consts: &ProblemConstants, n: usize, gamma: f64, c: f64, kappa: Option<f64>) -> Result<StepSizes> {
    let (l, _) = consts.require()?;
    let denom = n as f64 * (l + consts.l_prime());
    let case1 = (1.0 - gamma) / denom;
    let case2 = 1f64.min(c) / (2.0 * denom);
    let case3 = 1.0 / denom;
    Ok(StepSizes {
        rbcd: kappa.map(|k| ((1.0 - k) / denom).max(0.0)),
        case1,
        case2,
        case3,
        alpha: case1.min(case2).min(case3),
        beta: 1.0 / l,
    })
}

/// Contraction factor `1 - (1-κ)μα/(2n)` for random BCD; also the Case-1
/// factor with γ in place of κ.
pub fn linear_factor(consts: &ProblemConstants, n: usize, alpha: f64, kappa: f64) -> f64 {
    1.0 - (1.0 - kappa) * consts.mu * alpha / (2.0 * n as f64)
}

/// Case-2 factor `1 - (L+L')μα²/2` (ideal) or `/4` (practical).
pub fn case2_factor(consts: &ProblemConstants, alpha: f64, threshold: Threshold) -> f64 {
    let div = match threshold {
        Threshold::Ideal => 2.0,
        Threshold::Practical => 4.0,
    };
    1.0 - (consts.l + consts.l_prime()) * consts.mu * alpha * alpha / div
}

/// `E[F - G_F](x⁺) | x` by averaging the exact gap over all `n` equally
/// likely block choices, together with the decision taken at `x`. Infinite
/// when some block choice leaves the domain of the objectives.
pub fn expected_one_step_detail(p: &dyn Game, x: &BlockVector, cfg: &SolverConfig, variant: Variant) -> Result<(f64, Option<CaseDecision>)> {
    check_point(p, x)?;
    if variant == Variant::Cyclic {
        return Err(Error::InvalidParameter("the cyclic variant has no random block choice".into()));
    }
    let exact = exact_best_responses(p, x)?;
    let step = plan(p, x, cfg, variant, Some(&exact))?;
    if step.converged() {
        return Ok((gap(p, x, &exact), step.decision));
    }
    let n = p.num_players();
    let mut total = 0.0;
    for i in 0..n {
        let y = x.block_axpy(i, -cfg.alpha, &step.direction(i))?;
        if !y.is_finite() || !sum_f(p, &y).is_finite() {
            return Ok((f64::INFINITY, step.decision));
        }
        total += gap(p, &y, &exact_best_responses(p, &y)?);
    }
    Ok((total / n as f64, step.decision))
}

pub fn expected_one_step(p: &dyn Game, x: &BlockVector, cfg: &SolverConfig, variant: Variant) -> Result<f64> {
    expected_one_step_detail(p, x, cfg, variant).map(|(v, _)| v)
}
