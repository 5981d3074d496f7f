//! n-player infinite-horizon linear-quadratic games under linear feedback
//! `u_i = -K_i s`, with deterministic dynamics `s' = A s + Σ_i B_i u_i`.
//!
//! Player `i` pays `f_i(K) = tr(P_i Σ_0)` where `P_i` solves the closed-loop
//! Lyapunov equation `P_i = Q_i + K_iᵀ R_i K_i + A_clᵀ P_i A_cl`. Profiles are
//! flattened row-major, one block of `k_i * d` entries per player, so the
//! generic solvers run on them unchanged.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blockvec::{BlockLayout, BlockVector};
use crate::error::{Error, Result};
use crate::game::{Game, ProblemConstants};

pub const STABILITY_MARGIN: f64 = 1e-9;
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LQGameSpec {
    pub a: DMatrix<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub sigma0: DMatrix<f64>,
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-12 * scale
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

impl LQGameSpec {
    pub fn new(
        a: DMatrix<f64>,
        b: Vec<DMatrix<f64>>,
        q: Vec<DMatrix<f64>>,
        r: Vec<DMatrix<f64>>,
        sigma0: DMatrix<f64>,
    ) -> Result<Self> {
        let d = a.nrows();
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if d == 0 || a.ncols() != d {
            return bad(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols()));
        }
        let n = b.len();
        if n == 0 || q.len() != n || r.len() != n {
            return bad(format!("need one B, Q, R per player, got {}, {}, {}", n, q.len(), r.len()));
        }
        for i in 0..n {
            let k = b[i].ncols();
            if b[i].nrows() != d || k == 0 {
                return bad(format!("B_{i} must be {d}xk with k >= 1"));
            }
            if q[i].shape() != (d, d) || !is_symmetric(&q[i]) || min_eigenvalue(&q[i]) < -1e-12 {
                return bad(format!("Q_{i} must be a symmetric PSD {d}x{d} matrix"));
            }
            if r[i].shape() != (k, k) || !is_symmetric(&r[i]) || min_eigenvalue(&r[i]) <= 0.0 {
                return bad(format!("R_{i} must be a symmetric PD {k}x{k} matrix"));
            }
        }
        if sigma0.shape() != (d, d) || !is_symmetric(&sigma0) || min_eigenvalue(&sigma0) <= 0.0 {
            return bad(format!("Sigma0 must be a symmetric PD {d}x{d} matrix"));
        }
        Ok(Self { a, b, q, r, sigma0 })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_players(&self) -> usize {
        self.b.len()
    }

    pub fn input_dim(&self, i: usize) -> usize {
        self.b[i].ncols()
    }

    pub fn layout(&self) -> BlockLayout {
        let d = self.state_dim();
        BlockLayout::new((0..self.num_players()).map(|i| self.input_dim(i) * d).collect())
            .expect("validated dimensions are positive")
    }

    /// Gains `K_i` from a flat row-major profile.
    pub fn policy_from_flat(&self, data: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let d = self.state_dim();
        let total: usize = (0..self.num_players()).map(|i| self.input_dim(i) * d).sum();
        if data.len() != total {
            return Err(Error::Dimension { expected: total, got: data.len() });
        }
        let mut off = 0;
        Ok((0..self.num_players())
            .map(|i| {
                let k = self.input_dim(i);
                let m = DMatrix::from_row_slice(k, d, &data[off..off + k * d]);
                off += k * d;
                m
            })
            .collect())
    }

    pub fn policy_to_flat(&self, k: &[DMatrix<f64>]) -> Vec<f64> {
        k.iter().flat_map(row_major).collect()
    }

    fn check_policy(&self, k: &[DMatrix<f64>]) -> Result<()> {
        if k.len() != self.num_players() {
            return Err(Error::Dimension { expected: self.num_players(), got: k.len() });
        }
        for (i, ki) in k.iter().enumerate() {
            if ki.shape() != (self.input_dim(i), self.state_dim()) {
                return Err(Error::Dimension { expected: self.input_dim(i) * self.state_dim(), got: ki.len() });
            }
        }
        Ok(())
    }

    /// `A - Σ_{j≠i} B_j K_j`.
    pub fn a_minus_i(&self, k: &[DMatrix<f64>], i: usize) -> DMatrix<f64> {
        let mut m = self.a.clone();
        for (j, kj) in k.iter().enumerate().filter(|(j, _)| *j != i) {
            m -= &self.b[j] * kj;
        }
        m
    }
}

/// Entries of `m` in row-major order.
pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub a_cl: DMatrix<f64>,
    pub spectral_radius: f64,
    pub stable: bool,
}

/// `A_cl = A - Σ_i B_i K_i` and its stability.
pub fn closed_loop(spec: &LQGameSpec, k: &[DMatrix<f64>]) -> Result<ClosedLoop> {
    spec.check_policy(k)?;
    let mut a_cl = spec.a.clone();
    for (bi, ki) in spec.b.iter().zip(k) {
        a_cl -= bi * ki;
    }
    let rho = spectral_radius(&a_cl);
    Ok(ClosedLoop { stable: rho < 1.0 - STABILITY_MARGIN, spectral_radius: rho, a_cl })
}

/// A Lyapunov-type solution, or the marker for a divergent series.
#[derive(Debug, Clone, PartialEq)]
pub enum Lyapunov {
    Finite(DMatrix<f64>),
    Infinite,
}

impl Lyapunov {
    pub fn finite(self) -> Option<DMatrix<f64>> {
        match self {
            Lyapunov::Finite(m) => Some(m),
            Lyapunov::Infinite => None,
        }
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Solves `X = M + Tᵀ X T` by the vectorized linear system
/// `(I - Tᵀ ⊗ Tᵀ) vec X = vec M`.
pub fn solve_discrete_lyapunov(t: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = t.nrows();
    let tt = t.transpose();
    let sys = DMatrix::<f64>::identity(d * d, d * d) - tt.kronecker(&tt);
    let rhs = nalgebra::DVector::from_column_slice(m.as_slice());
    let sol = sys.lu().solve(&rhs).ok_or(Error::Singular("Lyapunov solve"))?;
    Ok(symmetrize(DMatrix::from_column_slice(d, d, sol.as_slice())))
}

/// Same equation by the recursion `X <- M + Tᵀ X T` from `X = M`.
pub fn solve_discrete_lyapunov_iterative(t: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let tt = t.transpose();
    let mut x = m.clone();
    for _ in 0..FIXED_POINT_MAX_ITERS {
        let next = m + &tt * &x * t;
        let delta = (&next - &x).norm();
        x = next;
        if !delta.is_finite() {
            break;
        }
        if delta <= FIXED_POINT_TOL * x.norm().max(1.0) {
            return Ok(symmetrize(x));
        }
    }
    Err(Error::NoConvergence { what: "Lyapunov fixed point", iters: FIXED_POINT_MAX_ITERS, residual: f64::NAN })
}

fn stage_cost(spec: &LQGameSpec, k: &[DMatrix<f64>], i: usize) -> DMatrix<f64> {
    &spec.q[i] + k[i].transpose() * &spec.r[i] * &k[i]
}

/// `P_i` for the current profile (direct solve).
pub fn lyapunov_value(spec: &LQGameSpec, k: &[DMatrix<f64>], i: usize) -> Result<Lyapunov> {
    check_player(spec, i)?;
    let cl = closed_loop(spec, k)?;
    if !cl.stable {
        return Ok(Lyapunov::Infinite);
    }
    Ok(Lyapunov::Finite(solve_discrete_lyapunov(&cl.a_cl, &stage_cost(spec, k, i))?))
}

/// `P_i` by fixed-point iteration, for cross-checking [`lyapunov_value`].
pub fn lyapunov_value_iterative(spec: &LQGameSpec, k: &[DMatrix<f64>], i: usize) -> Result<Lyapunov> {
    check_player(spec, i)?;
    let cl = closed_loop(spec, k)?;
    if !cl.stable {
        return Ok(Lyapunov::Infinite);
    }
    Ok(Lyapunov::Finite(solve_discrete_lyapunov_iterative(&cl.a_cl, &stage_cost(spec, k, i))?))
}

/// `Σ_K = Σ_0 + A_cl Σ_K A_clᵀ`.
pub fn sigma_k(spec: &LQGameSpec, k: &[DMatrix<f64>]) -> Result<Lyapunov> {
    let cl = closed_loop(spec, k)?;
    if !cl.stable {
        return Ok(Lyapunov::Infinite);
    }
    Ok(Lyapunov::Finite(solve_discrete_lyapunov(&cl.a_cl.transpose(), &spec.sigma0)?))
}

fn check_player(spec: &LQGameSpec, i: usize) -> Result<()> {
    if i >= spec.num_players() {
        Err(Error::BlockIndex { index: i, blocks: spec.num_players() })
    } else {
        Ok(())
    }
}

/// All closed-loop quantities of one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct LQEval {
    pub a_cl: DMatrix<f64>,
    pub spectral_radius: f64,
    pub p: Vec<DMatrix<f64>>,
    pub sigma_k: DMatrix<f64>,
    pub costs: Vec<f64>,
}

/// Evaluates every player, or `None` when the closed loop is unstable.
pub fn evaluate(spec: &LQGameSpec, k: &[DMatrix<f64>]) -> Result<Option<LQEval>> {
    let cl = closed_loop(spec, k)?;
    if !cl.stable {
        return Ok(None);
    }
    let p = (0..spec.num_players())
        .map(|i| solve_discrete_lyapunov(&cl.a_cl, &stage_cost(spec, k, i)))
        .collect::<Result<Vec<_>>>()?;
    let sigma = solve_discrete_lyapunov(&cl.a_cl.transpose(), &spec.sigma0)?;
    let costs = p.iter().map(|pi| (pi * &spec.sigma0).trace()).collect();
    Ok(Some(LQEval { a_cl: cl.a_cl, spectral_radius: cl.spectral_radius, p, sigma_k: sigma, costs }))
}

/// `f_i(K)` and `∇_{K_i} f_i = 2((R_i + B_iᵀP_iB_i)K_i - B_iᵀP_i A_{-i}) Σ_K`.
#[derive(Debug, Clone, PartialEq)]
pub enum CostGradient {
    Finite { cost: f64, grad: DMatrix<f64> },
    Infinite,
}

pub fn lq_cost_and_gradient(spec: &LQGameSpec, k: &[DMatrix<f64>], i: usize) -> Result<CostGradient> {
    check_player(spec, i)?;
    let Some(ev) = evaluate(spec, k)? else { return Ok(CostGradient::Infinite) };
    let (b, p) = (&spec.b[i], &ev.p[i]);
    let a_mi = spec.a_minus_i(k, i);
    let grad = ((&spec.r[i] + b.transpose() * p * b) * &k[i] - b.transpose() * p * a_mi) * &ev.sigma_k * 2.0;
    Ok(CostGradient::Finite { cost: ev.costs[i], grad })
}

/// `∇_{K_j} f_i = 2(δ_ij R_i K_i - B_jᵀ P_i A_cl) Σ_K` for every `j`.
pub fn lq_cross_gradients(spec: &LQGameSpec, k: &[DMatrix<f64>], i: usize) -> Result<Option<Vec<DMatrix<f64>>>> {
    check_player(spec, i)?;
    let Some(ev) = evaluate(spec, k)? else { return Ok(None) };
    let p = &ev.p[i];
    Ok(Some(
        (0..spec.num_players())
            .map(|j| {
                let mut g = -(spec.b[j].transpose() * p * &ev.a_cl);
                if j == i {
                    g += &spec.r[i] * &k[i];
                }
                g * &ev.sigma_k * 2.0
            })
            .collect(),
    ))
}

/// Player `i`'s optimal gain against the others, `(R + BᵀP̄B)⁻¹BᵀP̄A_{-i}`,
/// with `P̄` the discrete algebraic Riccati fixed point.
pub fn riccati_best_response(spec: &LQGameSpec, k: &[DMatrix<f64>], i: usize) -> Result<DMatrix<f64>> {
    check_player(spec, i)?;
    spec.check_policy(k)?;
    let a = spec.a_minus_i(k, i);
    let (b, q, r) = (&spec.b[i], &spec.q[i], &spec.r[i]);
    let gain = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let lhs = r + b.transpose() * p * b;
        lhs.lu().solve(&(b.transpose() * p * &a)).ok_or(Error::Singular("Riccati gain"))
    };
    let mut p = q.clone();
    let mut converged = false;
    let mut residual = f64::NAN;
    for _ in 0..FIXED_POINT_MAX_ITERS {
        let kk = gain(&p)?;
        let next = symmetrize(q + a.transpose() * &p * &a - a.transpose() * &p * b * &kk);
        residual = (&next - &p).norm();
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= FIXED_POINT_TOL * p.norm().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { what: "Riccati iteration", iters: FIXED_POINT_MAX_ITERS, residual });
    }
    let kstar = gain(&p)?;
    let rho = spectral_radius(&(&a - b * &kstar));
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable(rho));
    }
    Ok(kstar)
}

/// Best response by policy-gradient descent on `K_i`, used to certify
/// [`riccati_best_response`]. `step` is the initial step; it doubles after
/// every accepted step and halves until the cost decreases.
pub fn gd_best_response(spec: &LQGameSpec, k: &[DMatrix<f64>], i: usize, step: f64, tol: f64, max_iters: usize) -> Result<DMatrix<f64>> {
    let mut prof = k.to_vec();
    let CostGradient::Finite { mut cost, mut grad } = lq_cost_and_gradient(spec, &prof, i)? else {
        return Err(Error::Unstable(closed_loop(spec, &prof)?.spectral_radius));
    };
    let mut eta = step;
    for _ in 0..max_iters {
        if grad.norm() <= tol {
            return Ok(prof[i].clone());
        }
        loop {
            let mut trial = prof.clone();
            trial[i] -= &grad * eta;
            if let CostGradient::Finite { cost: c, grad: g } = lq_cost_and_gradient(spec, &trial, i)? {
                // cost changes below the Lyapunov solve's roundoff are noise; there the gradient must shrink
                let noise = 1e-12 * (1.0 + cost.abs());
                if c < cost - noise || c <= cost + noise && g.norm() < grad.norm() {
                    (prof, cost, grad) = (trial, c, g);
                    eta *= 2.0;
                    break;
                }
            }
            eta *= 0.5;
            if eta < 1e-300 {
                return Err(Error::NoConvergence { what: "policy-gradient line search", iters: 0, residual: grad.norm() });
            }
        }
    }
    Err(Error::NoConvergence { what: "policy-gradient best response", iters: max_iters, residual: grad.norm() })
}

/// Sampling region for gain profiles: entries uniform in `[-radius, radius]`,
/// kept only when the closed loop has spectral radius at most `max_rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyBox {
    pub radius: f64,
    pub max_rho: f64,
}

impl Default for PolicyBox {
    fn default() -> Self {
        Self { radius: 0.5, max_rho: 0.99 }
    }
}

impl PolicyBox {
    /// Rejection-samples one stable flat profile; `None` after 10000 rejections.
    pub fn sample(&self, spec: &LQGameSpec, rng: &mut impl Rng) -> Option<Vec<f64>> {
        let total = spec.layout().total_dim();
        for _ in 0..10_000 {
            let flat: Vec<f64> = (0..total).map(|_| rng.gen_range(-self.radius..=self.radius)).collect();
            let k = spec.policy_from_flat(&flat).ok()?;
            if closed_loop(spec, &k).ok()?.spectral_radius <= self.max_rho {
                return Some(flat);
            }
        }
        None
    }
}

/// An LQ game exposed through the generic [`Game`] interface.
#[derive(Debug, Clone)]
pub struct LQGame {
    spec: LQGameSpec,
    layout: Arc<BlockLayout>,
    constants: ProblemConstants,
}

impl LQGame {
    pub fn spec(&self) -> &LQGameSpec {
        &self.spec
    }

    pub fn with_constants(spec: LQGameSpec, constants: ProblemConstants) -> Self {
        let layout = Arc::new(spec.layout());
        Self { spec, layout, constants }
    }

    fn policy(&self, x: &BlockVector) -> Vec<DMatrix<f64>> {
        self.spec.policy_from_flat(x.as_slice()).expect("point conforms to layout")
    }
}

impl Game for LQGame {
    fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    fn objective(&self, i: usize, x: &BlockVector) -> f64 {
        match lyapunov_value(&self.spec, &self.policy(x), i) {
            Ok(Lyapunov::Finite(p)) => (p * &self.spec.sigma0).trace(),
            _ => f64::INFINITY,
        }
    }

    fn full_gradient(&self, i: usize, x: &BlockVector) -> BlockVector {
        let data = match lq_cross_gradients(&self.spec, &self.policy(x), i) {
            Ok(Some(gs)) => gs.iter().flat_map(row_major).collect(),
            _ => vec![f64::NAN; self.layout.total_dim()],
        };
        BlockVector::new(self.layout.clone(), data).expect("gradient matches layout")
    }

    fn own_gradient(&self, i: usize, x: &BlockVector) -> Vec<f64> {
        match lq_cost_and_gradient(&self.spec, &self.policy(x), i) {
            Ok(CostGradient::Finite { grad, .. }) => row_major(&grad),
            _ => vec![f64::NAN; self.layout.block_dims()[i]],
        }
    }

    fn has_best_response(&self) -> bool {
        true
    }

    fn best_response(&self, i: usize, x: &BlockVector) -> Result<Vec<f64>> {
        Ok(row_major(&riccati_best_response(&self.spec, &self.policy(x), i)?))
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }
}

/// Wraps `spec` as a game with `L` and `mu` estimated over `samples` stable
/// profiles drawn from `policy_box`.
pub fn lq_as_game(spec: LQGameSpec, policy_box: &PolicyBox, samples: usize, seed: u64) -> Result<LQGame> {
    let probe = LQGame::with_constants(spec, ProblemConstants::unknown());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = probe.layout.clone();
    let (mut l_hat, mut mu_hat) = (0.0f64, f64::INFINITY);
    let h = 1e-4;
    for _ in 0..samples {
        let Some(flat) = policy_box.sample(&probe.spec, &mut rng) else { break };
        let x = BlockVector::new(layout.clone(), flat)?;
        for i in 0..probe.num_players() {
            // local curvature along a random direction
            let dir: Vec<f64> = (0..layout.total_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut y = x.clone();
            for (v, dv) in y.as_mut_slice().iter_mut().zip(&dir) {
                *v += h * dv / norm;
            }
            let gx = probe.full_gradient(i, &x);
            let gy = probe.full_gradient(i, &y);
            let diff: f64 = gx.as_slice().iter().zip(gy.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if diff.is_finite() {
                l_hat = l_hat.max(diff / h);
            }
            let g = probe.own_gradient(i, &x);
            let gsq: f64 = g.iter().map(|v| v * v).sum();
            let Ok(br) = probe.best_response(i, &x) else { continue };
            let excess = probe.objective(i, &x) - probe.objective(i, &x.with_block(i, &br)?);
            if excess > 1e-12 && gsq.is_finite() {
                mu_hat = mu_hat.min(gsq / (2.0 * excess));
            }
        }
    }
    if !(l_hat > 0.0 && mu_hat.is_finite()) {
        return Err(Error::InsufficientData("no usable stable profiles for constant estimation".into()));
    }
    let constants = ProblemConstants::estimated(l_hat.max(mu_hat), mu_hat)?;
    Ok(LQGame::with_constants(probe.spec, constants))
}

/// Random instance: `A` rescaled to spectral radius 0.9, `B_i` entries
/// uniform in `(0, 1/(n d))` with `k_i` inputs, `Q_i = I + GGᵀ/(10d)`,
/// `R_i = I`, `Σ_0 = I`.
pub fn random_instance(n: usize, d: usize, inputs: usize, seed: u64) -> Result<LQGameSpec> {
    if n == 0 || d == 0 || inputs == 0 {
        return Err(Error::InvalidParameter("players, state and input dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let mut rho = spectral_radius(&a);
    while rho < 1e-6 {
        a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        rho = spectral_radius(&a);
    }
    a *= 0.9 / rho;
    let scale = 1.0 / (n * d) as f64;
    let b = (0..n).map(|_| DMatrix::from_fn(d, inputs, |_, _| rng.gen_range(0.0..1.0) * scale)).collect();
    let q = (0..n)
        .map(|_| {
            let g = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
            symmetrize(DMatrix::identity(d, d) + &g * g.transpose() / (10.0 * d as f64))
        })
        .collect();
    let r = (0..n).map(|_| DMatrix::identity(inputs, inputs)).collect();
    LQGameSpec::new(a, b, q, r, DMatrix::identity(d, d))
}

/// The two-player multi-convexity counterexample: `A = B_1 = B_2 = I_3`,
/// `Q_i = R_i = Σ_0 = I_3`, returning `(spec, K_1, K_1', K_2)`.
pub fn multiconvexity_counterexample() -> (LQGameSpec, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let i3 = DMatrix::<f64>::identity(3, 3);
    let spec = LQGameSpec::new(i3.clone(), vec![i3.clone(); 2], vec![i3.clone(); 2], vec![i3.clone(); 2], i3.clone())
        .expect("identity data is valid");
    let k1 = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -10.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let k1p = DMatrix::from_row_slice(3, 3, &[0.0, -10.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
    (spec, k1, k1p, i3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::finite_diff_gradient;
    use crate::scalar::golden_section;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn scalar_game(a: f64, b: f64, q: f64, r: f64) -> LQGameSpec {
        LQGameSpec::new(m(1, 1, &[a]), vec![m(1, 1, &[b])], vec![m(1, 1, &[q])], vec![m(1, 1, &[r])], m(1, 1, &[1.0])).unwrap()
    }

    #[test]
    fn validation_rejects_bad_shapes_and_definiteness() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert!(LQGameSpec::new(i2.clone(), vec![], vec![], vec![], i2.clone()).is_err());
        assert!(LQGameSpec::new(i2.clone(), vec![m(2, 1, &[1.0, 0.0])], vec![-i2.clone()], vec![m(1, 1, &[1.0])], i2.clone()).is_err());
        assert!(LQGameSpec::new(i2.clone(), vec![m(2, 1, &[1.0, 0.0])], vec![i2.clone()], vec![m(1, 1, &[0.0])], i2.clone()).is_err());
        assert!(LQGameSpec::new(i2.clone(), vec![m(2, 1, &[1.0, 0.0])], vec![i2.clone()], vec![m(1, 1, &[1.0])], m(2, 2, &[1.0, 0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn closed_loop_examples() {
        let (spec, k1, k1p, k2) = multiconvexity_counterexample();
        assert!(closed_loop(&spec, &[k1.clone(), k2.clone()]).unwrap().stable);
        assert!(closed_loop(&spec, &[k1p.clone(), k2.clone()]).unwrap().stable);
        let mid = (&k1 + &k1p) * 0.5;
        let cl = closed_loop(&spec, &[mid, k2]).unwrap();
        assert!(!cl.stable);
        assert_relative_eq!(cl.spectral_radius, 5f64.sqrt(), epsilon = 1e-9);

        let s = scalar_game(1.0, 1.0, 1.0, 1.0);
        let cl = closed_loop(&s, &[m(1, 1, &[0.5])]).unwrap();
        assert_eq!(cl.a_cl[(0, 0)], 0.5);
        assert!(cl.stable);
        assert!(!closed_loop(&scalar_game(1.2, 1.0, 1.0, 1.0), &[m(1, 1, &[0.0])]).unwrap().stable);
    }

    #[test]
    fn lyapunov_scalar_and_one_step() {
        // a_cl = 0.5 and stage cost 1 + 0.25 = 1.25 -> 1.25 / 0.75
        let s = scalar_game(1.0, 1.0, 1.0, 1.0);
        let k = [m(1, 1, &[0.5])];
        let p = lyapunov_value(&s, &k, 0).unwrap().finite().unwrap();
        assert_relative_eq!(p[(0, 0)], 1.25 / (1.0 - 0.25), epsilon = 1e-14);
        assert_relative_eq!(p[(0, 0)], 5.0 / 3.0, epsilon = 1e-14);
        let sig = sigma_k(&s, &k).unwrap().finite().unwrap();
        assert_relative_eq!(sig[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);

        let dead = scalar_game(0.5, 1.0, 2.0, 1.0);
        let k = [m(1, 1, &[0.5])];
        let p = lyapunov_value(&dead, &k, 0).unwrap().finite().unwrap();
        assert_relative_eq!(p[(0, 0)], 2.0 + 0.25, epsilon = 1e-15);
        assert_eq!(lyapunov_value(&scalar_game(2.0, 1.0, 1.0, 1.0), &[m(1, 1, &[0.0])], 0).unwrap(), Lyapunov::Infinite);
    }

    #[test]
    fn sigma_componentwise_series() {
        let a = m(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        let spec = LQGameSpec::new(a, vec![m(2, 1, &[1.0, 1.0])], vec![DMatrix::identity(2, 2)], vec![m(1, 1, &[1.0])], DMatrix::identity(2, 2)).unwrap();
        let sig = sigma_k(&spec, &[m(1, 2, &[0.0, 0.0])]).unwrap().finite().unwrap();
        assert_relative_eq!(sig, m(2, 2, &[4.0 / 3.0, 0.0, 0.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn direct_and_iterative_lyapunov_agree() {
        for seed in 0..10 {
            let spec = random_instance(2, 3, 1, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let flat = PolicyBox::default().sample(&spec, &mut rng).unwrap();
            let k = spec.policy_from_flat(&flat).unwrap();
            for i in 0..2 {
                let a = lyapunov_value(&spec, &k, i).unwrap().finite().unwrap();
                let b = lyapunov_value_iterative(&spec, &k, i).unwrap().finite().unwrap();
                assert!((&a - &b).norm() <= 1e-9);
                let ev = evaluate(&spec, &k).unwrap().unwrap();
                let res = &a - (&spec.q[i] + k[i].transpose() * &spec.r[i] * &k[i] + ev.a_cl.transpose() * &a * &ev.a_cl);
                assert!(res.norm() <= 1e-9);
                let sres = &ev.sigma_k - (&spec.sigma0 + &ev.a_cl * &ev.sigma_k * ev.a_cl.transpose());
                assert!(sres.norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn trace_cost_matches_simulation() {
        for (spec, k) in [
            (scalar_game(0.9, 1.0, 1.0, 1.0), vec![m(1, 1, &[0.3])]),
            (random_instance(2, 2, 1, 4).unwrap(), vec![m(1, 2, &[0.1, -0.2]), m(1, 2, &[0.0, 0.3])]),
        ] {
            let ev = evaluate(&spec, &k).unwrap().unwrap();
            let d = spec.state_dim();
            let eig = spec.sigma0.clone().symmetric_eigen();
            let steps = 4000;
            for i in 0..spec.num_players() {
                let w = &spec.q[i] + k[i].transpose() * &spec.r[i] * &k[i];
                let mut total = 0.0;
                for c in 0..d {
                    let mut s = eig.eigenvectors.column(c) * eig.eigenvalues[c].sqrt();
                    for _ in 0..steps {
                        total += (s.transpose() * &w * &s)[(0, 0)];
                        s = &ev.a_cl * s;
                    }
                }
                let tail = ev.spectral_radius.powi(2 * steps) * ev.costs[i] * 10.0;
                assert!((total - ev.costs[i]).abs() <= tail.max(1e-9 * ev.costs[i]));
            }
        }
    }

    #[test]
    fn counterexample_costs_are_finite_finite_infinite() {
        let (spec, k1, k1p, k2) = multiconvexity_counterexample();
        let game = LQGame::with_constants(spec.clone(), ProblemConstants::unknown());
        let flat = |k: &DMatrix<f64>| BlockVector::new(game.layout.clone(), spec.policy_to_flat(&[k.clone(), k2.clone()])).unwrap();
        assert!(game.objective(0, &flat(&k1)).is_finite());
        assert!(game.objective(0, &flat(&k1p)).is_finite());
        assert_eq!(game.objective(0, &flat(&((&k1 + &k1p) * 0.5))), f64::INFINITY);
        assert_eq!(lq_cost_and_gradient(&spec, &[(&k1 + &k1p) * 0.5, k2], 0).unwrap(), CostGradient::Infinite);
    }

    #[test]
    fn scalar_gradient_matches_finite_differences() {
        let spec = scalar_game(0.9, 1.0, 1.0, 1.0);
        let game = LQGame::with_constants(spec.clone(), ProblemConstants::unknown());
        let x = BlockVector::new(game.layout.clone(), vec![0.5]).unwrap();
        let fd = finite_diff_gradient(&game, 0, &x, 1e-6).unwrap();
        let an = game.own_gradient(0, &x);
        assert!((fd.as_slice()[0] - an[0]).abs() <= 1e-6 * an[0].abs().max(1.0));
    }

    #[test]
    fn cross_gradients_match_finite_differences() {
        for seed in 0..5 {
            let spec = random_instance(3, 2, 1, seed).unwrap();
            let game = LQGame::with_constants(spec.clone(), ProblemConstants::unknown());
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = BlockVector::new(game.layout.clone(), PolicyBox::default().sample(&spec, &mut rng).unwrap()).unwrap();
            for i in 0..3 {
                let fd = finite_diff_gradient(&game, i, &x, 1e-5).unwrap();
                let an = game.full_gradient(i, &x);
                for (u, v) in fd.as_slice().iter().zip(an.as_slice()) {
                    assert!((u - v).abs() <= 1e-5 * v.abs().max(1.0), "{u} vs {v}");
                }
                for (u, v) in game.own_gradient(i, &x).iter().zip(an.block(i).unwrap()) {
                    assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn scalar_riccati_matches_line_search() {
        let spec = scalar_game(0.5, 1.0, 1.0, 1.0);
        let kstar = riccati_best_response(&spec, &[m(1, 1, &[0.0])], 0).unwrap()[(0, 0)];
        let cost = |kk: f64| {
            let a = 0.5 - kk;
            (1.0 + kk * kk) / (1.0 - a * a)
        };
        let ls = golden_section(cost, -0.4, 1.4, 1e-12);
        assert!((kstar - ls).abs() <= 1e-6);
    }

    #[test]
    fn zero_state_cost_gives_zero_gain() {
        let spec = LQGameSpec::new(m(1, 1, &[0.7]), vec![m(1, 1, &[1.0])], vec![m(1, 1, &[0.0])], vec![m(1, 1, &[1.0])], m(1, 1, &[1.0])).unwrap();
        let k = riccati_best_response(&spec, &[m(1, 1, &[0.3])], 0).unwrap();
        assert_eq!(k[(0, 0)], 0.0);
    }

    #[test]
    fn riccati_gain_is_stationary_and_matches_descent() {
        let spec = random_instance(2, 2, 1, 11).unwrap();
        let k = vec![m(1, 2, &[0.1, 0.0]), m(1, 2, &[-0.2, 0.1])];
        for i in 0..2 {
            let ks = riccati_best_response(&spec, &k, i).unwrap();
            let mut prof = k.clone();
            prof[i] = ks.clone();
            let CostGradient::Finite { grad, .. } = lq_cost_and_gradient(&spec, &prof, i).unwrap() else { panic!("unstable") };
            assert!(grad.norm() <= 1e-8);
            let gd = gd_best_response(&spec, &k, i, 0.5, 1e-8, 200_000).unwrap();
            assert!((&gd - &ks).amax() <= 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn finite_cost_implies_stable(seed in 0u64..1000, radius in 0.1f64..3.0) {
            let spec = random_instance(2, 2, 1, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let flat: Vec<f64> = (0..4).map(|_| rng.gen_range(-radius..radius)).collect();
            let k = spec.policy_from_flat(&flat).unwrap();
            let cl = closed_loop(&spec, &k).unwrap();
            match lq_cost_and_gradient(&spec, &k, 0).unwrap() {
                CostGradient::Finite { cost, .. } => { prop_assert!(cl.spectral_radius < 1.0); prop_assert!(cost >= 0.0); }
                CostGradient::Infinite => prop_assert!(!cl.stable),
            }
        }
    }
}
