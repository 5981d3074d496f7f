//! Registry of benchmark games.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blockvec::{BlockLayout, BlockVector};
use crate::error::{Error, Result};
use crate::game::{sum_f, FnGame, Game, ProblemConstants};
use crate::lqgame::{self, LQGame, PolicyBox};
use crate::scalar::{global_minimize, minimize_convex};

pub const PROBLEM_NAMES: [&str; 11] = [
    "f1",
    "f2",
    "f3",
    "f4",
    "f5",
    "f6",
    "saddle",
    "cournot-linear",
    "cournot-quadratic",
    "resource",
    "lq",
];

/// Partial-stationary point of the strict-saddle game, from a 40-digit
/// Newton solve of `∇_1 f_1 = ∇_2 f_2 = 0`.
pub const SADDLE_NE: [f64; 2] = [-0.132_317_367_857_319_2, 0.558_786_523_573_983_7];

/// Axis-aligned sampling box, one interval per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl TestBox {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| if a < b { rng.gen_range(a..b) } else { a }).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }
}

type NePredicate = dyn Fn(&[f64]) -> bool + Send + Sync;

/// Known equilibria: an explicit list, or a membership test for a continuum
/// plus representative members.
#[derive(Clone)]
pub enum KnownNe {
    Points(Vec<Vec<f64>>),
    Set { contains: Arc<NePredicate>, representatives: Vec<Vec<f64>>, description: String },
}

impl KnownNe {
    pub fn representatives(&self) -> &[Vec<f64>] {
        match self {
            KnownNe::Points(p) => p,
            KnownNe::Set { representatives, .. } => representatives,
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            KnownNe::Points(p) => p.iter().any(|q| q.iter().zip(x).all(|(a, b)| (a - b).abs() <= tol)),
            KnownNe::Set { contains, .. } => contains(x),
        }
    }
}

impl fmt::Debug for KnownNe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KnownNe::Points(p) => f.debug_tuple("Points").field(p).finish(),
            KnownNe::Set { description, .. } => f.debug_tuple("Set").field(description).finish(),
        }
    }
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub game: Arc<dyn Game>,
    pub known_ne: Option<KnownNe>,
    pub test_box: TestBox,
    pub notes: String,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("constants", &self.game.constants())
            .field("known_ne", &self.known_ne)
            .field("test_box", &self.test_box)
            .finish()
    }
}

impl ProblemSpec {
    pub fn point(&self, data: Vec<f64>) -> Result<BlockVector> {
        BlockVector::new(self.game.layout().clone(), data)
    }

    /// `count` points drawn uniformly from the test box with a seeded
    /// generator, skipping draws where some objective is not finite (such as
    /// destabilizing LQ gains). Returns fewer points only if the box is almost
    /// entirely outside the domain.
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<BlockVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count.saturating_mul(1000) {
            if out.len() == count {
                break;
            }
            let x = self.point(self.test_box.sample(&mut rng)).expect("box matches layout");
            if sum_f(self.game.as_ref(), &x).is_finite() {
                out.push(x);
            }
        }
        out
    }
}

fn analytic(l: f64, mu: f64) -> ProblemConstants {
    ProblemConstants::analytic(l, mu).expect("registry constants are valid")
}

fn scalar2() -> BlockLayout {
    BlockLayout::scalar(2).expect("two blocks")
}

fn f1_value(x: &[f64]) -> f64 {
    (x[0] - 1.0).powi(2) * (x[1] + 1.0).powi(2) + (x[0] + 1.0).powi(2) * (x[1] - 1.0).powi(2)
}

fn f1_grad(x: &[f64]) -> Vec<f64> {
    vec![4.0 * x[0] * (x[1] * x[1] + 1.0) - 8.0 * x[1], 4.0 * x[1] * (x[0] * x[0] + 1.0) - 8.0 * x[0]]
}

/// `2y / (y² + 1)`, the unique minimizer of `f1` in one coordinate given the other.
fn f1_response(other: f64) -> f64 {
    2.0 * other / (other * other + 1.0)
}

fn f2_value(x: &[f64]) -> f64 {
    f1_value(x) + (-(x[1] - 1.0).powi(2)).exp()
}

fn f2_grad(x: &[f64]) -> Vec<f64> {
    let mut g = f1_grad(x);
    g[1] -= 2.0 * (x[1] - 1.0) * (-(x[1] - 1.0).powi(2)).exp();
    g
}

/// `exp(-1/d²)` with its removable singularity at `d = 0` filled by 0.
fn flat_term(d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        (-1.0 / (d * d)).exp()
    }
}

fn flat_term_deriv(d: f64) -> f64 {
    let e = flat_term(d);
    if e == 0.0 {
        0.0
    } else {
        2.0 * e / (d * d * d)
    }
}

fn f3_value(x: &[f64]) -> f64 {
    (x[0] + x[1]).powi(2) + flat_term(x[0] - x[1])
}

fn f3_grad(x: &[f64]) -> Vec<f64> {
    let s = 2.0 * (x[0] + x[1]);
    let e = flat_term_deriv(x[0] - x[1]);
    vec![s + e, s - e]
}

fn f3_response(i: usize, x: &[f64]) -> f64 {
    let other = x[1 - i];
    let df = |t: f64| {
        let mut y = [0.0; 2];
        y[i] = t;
        y[1 - i] = other;
        f3_grad(&y)[i]
    };
    minimize_convex(df, -other)
}

fn f4_value(x: &[f64]) -> f64 {
    (x[0] + x[1]).powi(2)
}

fn f4_grad(x: &[f64]) -> Vec<f64> {
    let s = 2.0 * (x[0] + x[1]);
    vec![s, s]
}

fn f1() -> ProblemSpec {
    let game = FnGame::new(scalar2(), analytic(60.0, 4.0), |_, x| f1_value(x), |_, x| f1_grad(x))
        .with_best_response(|i, x| vec![f1_response(x[1 - i])]);
    ProblemSpec {
        name: "f1".into(),
        game: Arc::new(game),
        known_ne: Some(KnownNe::Points(vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![0.0, 0.0]])),
        test_box: TestBox::cube(2, -2.0, 2.0),
        notes: "potential game (x1-1)^2(x2+1)^2 + (x1+1)^2(x2-1)^2; L bounds the Hessian on the test box".into(),
    }
}

fn f2() -> ProblemSpec {
    let game = FnGame::new(scalar2(), analytic(62.0, 2.0), |_, x| f2_value(x), |_, x| f2_grad(x)).with_best_response(|i, x| {
        if i == 0 {
            vec![f1_response(x[1])]
        } else {
            let x1 = x[0];
            vec![minimize_convex(|t| f2_grad(&[x1, t])[1], f1_response(x1))]
        }
    });
    ProblemSpec {
        name: "f2".into(),
        game: Arc::new(game),
        known_ne: None,
        test_box: TestBox::cube(2, -2.0, 2.0),
        notes: "f1 + exp(-(x2-1)^2); player-2 response by bisection".into(),
    }
}

fn f3() -> ProblemSpec {
    let game = FnGame::new(scalar2(), ProblemConstants::unknown(), |_, x| f3_value(x), |_, x| f3_grad(x))
        .with_best_response(|i, x| vec![f3_response(i, x)]);
    ProblemSpec {
        name: "f3".into(),
        game: Arc::new(game),
        known_ne: Some(KnownNe::Points(vec![vec![0.0, 0.0]])),
        test_box: TestBox::cube(2, -2.0, 2.0),
        notes: "potential game (x1+x2)^2 + exp(-1/(x1-x2)^2); no analytic PL constant".into(),
    }
}

fn f4() -> ProblemSpec {
    let game = FnGame::new(scalar2(), analytic(4.0, 2.0), |_, x| f4_value(x), |_, x| f4_grad(x))
        .with_best_response(|i, x| vec![-x[1 - i]]);
    ProblemSpec {
        name: "f4".into(),
        game: Arc::new(game),
        known_ne: Some(KnownNe::Set {
            contains: Arc::new(|x: &[f64]| (x[0] + x[1]).abs() <= 1e-12),
            representatives: vec![vec![0.0, 0.0], vec![1.0, -1.0], vec![-1.5, 1.5]],
            description: "line x1 = -x2".into(),
        }),
        test_box: TestBox::cube(2, -2.0, 2.0),
        notes: "potential game (x1+x2)^2".into(),
    }
}

fn f5() -> ProblemSpec {
    let game = FnGame::new(
        scalar2(),
        ProblemConstants::unknown(),
        |i, x| if i == 0 { f3_value(x) } else { f4_value(x) },
        |i, x| if i == 0 { f3_grad(x) } else { f4_grad(x) },
    )
    .with_best_response(|i, x| if i == 0 { vec![f3_response(0, x)] } else { vec![-x[0]] });
    ProblemSpec {
        name: "f5".into(),
        game: Arc::new(game),
        known_ne: Some(KnownNe::Points(vec![vec![0.0, 0.0]])),
        test_box: TestBox::cube(2, -2.0, 2.0),
        notes: "general-sum pair {f3, (x1+x2)^2}".into(),
    }
}

fn f6() -> ProblemSpec {
    let game = FnGame::new(
        scalar2(),
        analytic(4.0, 2.0),
        |i, x| if i == 0 { x[0] * x[0] + x[1] * x[1] } else { f4_value(x) },
        |i, x| if i == 0 { vec![2.0 * x[0], 2.0 * x[1]] } else { f4_grad(x) },
    )
    .with_best_response(|i, x| if i == 0 { vec![0.0] } else { vec![-x[0]] });
    ProblemSpec {
        name: "f6".into(),
        game: Arc::new(game),
        known_ne: Some(KnownNe::Points(vec![vec![0.0, 0.0]])),
        test_box: TestBox::cube(2, -2.0, 2.0),
        notes: "general-sum pair {x1^2 + x2^2, (x1+x2)^2}".into(),
    }
}

fn resource() -> ProblemSpec {
    let game = FnGame::new(
        scalar2(),
        analytic(1.0 + 5f64.sqrt(), 2.0),
        |i, x| x[i] * x[i] - 2.0 * x[0] * x[1],
        |i, x| {
            let j = 1 - i;
            let mut g = vec![0.0; 2];
            g[i] = 2.0 * x[i] - 2.0 * x[j];
            g[j] = -2.0 * x[i];
            g
        },
    )
    .with_best_response(|i, x| vec![x[1 - i]]);
    ProblemSpec {
        name: "resource".into(),
        game: Arc::new(game),
        known_ne: Some(KnownNe::Set {
            contains: Arc::new(|x: &[f64]| (x[0] - x[1]).abs() <= 1e-12),
            representatives: vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![-0.5, -0.5]],
            description: "line xA = xB".into(),
        }),
        test_box: TestBox::cube(2, -2.0, 2.0),
        notes: "fA = xA^2 - 2 xA xB, fB = xB^2 - 2 xA xB; every point of xA = xB is an equilibrium".into(),
    }
}

fn saddle_value(i: usize, x: &[f64]) -> f64 {
    let s = if i == 0 { 1.0 } else { -1.0 };
    (x[0] - 1.0).powi(2) + 4.0 * (x[0] + s * 0.1 * x[0].cos()) * x[1] + (x[1] + s * 0.1 * x[1].sin()).powi(2)
}

fn saddle_grad(i: usize, x: &[f64]) -> Vec<f64> {
    let s = if i == 0 { 1.0 } else { -1.0 };
    vec![
        2.0 * (x[0] - 1.0) + 4.0 * (1.0 - s * 0.1 * x[0].sin()) * x[1],
        4.0 * (x[0] + s * 0.1 * x[0].cos()) + 2.0 * (x[1] + s * 0.1 * x[1].sin()) * (1.0 + s * 0.1 * x[1].cos()),
    ]
}

/// Global minimizer of the saddle game's own objective. Writing it as
/// `(t - c)² + A·trig(t)` with `|trig| <= 1`, any point beating the center `c`
/// satisfies `(t - c)² <= 2|A|` (player 2 also pays the drift of `t sin t`),
/// which sets the search half-width.
fn saddle_response(i: usize, x: &[f64]) -> f64 {
    let (center, width) = if i == 0 {
        (1.0 - 2.0 * x[1], (0.8 * x[1].abs()).sqrt() + 0.1)
    } else {
        let c = -2.0 * (x[0] - 0.1 * x[0].cos());
        (c, 0.1 + (0.02 + 0.4 * c.abs()).sqrt() + 0.1)
    };
    let at = |t: f64| {
        let mut y = [x[0], x[1]];
        y[i] = t;
        y
    };
    global_minimize(|t| saddle_value(i, &at(t)), |t| saddle_grad(i, &at(t))[i], center, width, 0.02)
}

fn saddle() -> ProblemSpec {
    let game = FnGame::new(scalar2(), ProblemConstants::estimated(7.5, 1.2).expect("valid"), saddle_value, saddle_grad)
        .with_best_response(|i, x| vec![saddle_response(i, x)]);
    ProblemSpec {
        name: "saddle".into(),
        game: Arc::new(game),
        known_ne: Some(KnownNe::Points(vec![SADDLE_NE.to_vec()])),
        test_box: TestBox::cube(2, -2.0, 2.0),
        notes: "two-player strict-saddle game; constants bounded on the test box".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Demand {
    Linear,
    Quadratic,
}

/// Cournot competition with linear costs `c_i q_i` and price `a - bQ` or
/// `a - bQ²`, each firm minimizing its negative profit.
pub fn build_cournot(n: usize, demand: Demand, a: f64, b: f64, costs: &[f64]) -> Result<ProblemSpec> {
    if n == 0 || costs.len() != n {
        return Err(Error::InvalidParameter(format!("need one cost per firm, got {} for {n} firms", costs.len())));
    }
    let cmax = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cmin = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(b > 0.0 && cmin > 0.0 && a > cmax) {
        return Err(Error::InvalidParameter(format!("need a > max c_i > 0 and b > 0, got a={a}, b={b}, costs={costs:?}")));
    }
    let c: Arc<[f64]> = costs.into();
    let layout = BlockLayout::scalar(n)?;
    let (lo, hi) = (0.1, a / (2.0 * b));
    let symmetric = costs.iter().all(|&ci| ci == costs[0]);
    match demand {
        Demand::Linear => {
            let (cv, cg, cr) = (c.clone(), c.clone(), c.clone());
            let nf = n as f64;
            let game = FnGame::new(
                layout,
                analytic(b * (1.0 + nf.sqrt()), 2.0 * b),
                move |i, q| {
                    let total: f64 = q.iter().sum();
                    -((a - b * total) * q[i] - cv[i] * q[i])
                },
                move |i, q| {
                    let total: f64 = q.iter().sum();
                    let mut g = vec![b * q[i]; q.len()];
                    g[i] = -a + b * total + b * q[i] + cg[i];
                    g
                },
            )
            .with_best_response(move |i, q| {
                let others: f64 = q.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum();
                vec![(a - cr[i] - b * others) / (2.0 * b)]
            });
            let total = (nf * a - costs.iter().sum::<f64>()) / (b * (nf + 1.0));
            let ne: Vec<f64> = costs.iter().map(|ci| (a - ci) / b - total).collect();
            Ok(ProblemSpec {
                name: "cournot-linear".into(),
                game: Arc::new(game),
                known_ne: Some(KnownNe::Points(vec![ne])),
                test_box: TestBox::cube(n, 0.0, hi),
                notes: format!("linear inverse demand a - bQ with a={a}, b={b}"),
            })
        }
        Demand::Quadratic => {
            let (cv, cg) = (c.clone(), c.clone());
            let nf = n as f64;
            let mu = 4.0 * b * nf * lo + 2.0 * b * lo;
            let diag = 4.0 * b * nf * hi + 2.0 * b * hi;
            let cross = 2.0 * b * (nf + 1.0) * hi;
            let rest = 2.0 * b * hi;
            let l = (diag * diag + 2.0 * (nf - 1.0) * cross * cross + (nf - 1.0).powi(2) * rest * rest).sqrt();
            let game = FnGame::new(
                layout,
                ProblemConstants::estimated(l.max(mu), mu)?,
                move |i, q| {
                    let total: f64 = q.iter().sum();
                    -((a - b * total * total) * q[i] - cv[i] * q[i])
                },
                move |i, q| {
                    let total: f64 = q.iter().sum();
                    let mut g = vec![2.0 * b * total * q[i]; q.len()];
                    g[i] = -a + b * total * total + 2.0 * b * total * q[i] + cg[i];
                    g
                },
            );
            let known_ne = symmetric.then(|| {
                let q = ((a - costs[0]) / (b * (nf * nf + 2.0 * nf))).sqrt();
                KnownNe::Points(vec![vec![q; n]])
            });
            Ok(ProblemSpec {
                name: "cournot-quadratic".into(),
                game: Arc::new(game),
                known_ne,
                test_box: TestBox::cube(n, lo, hi),
                notes: format!("quadratic inverse demand a - bQ^2 with a={a}, b={b}; best responses via ABR only"),
            })
        }
    }
}

/// Default LQ benchmark: three players, two states, one input each.
pub fn lq_default() -> Result<ProblemSpec> {
    lq_problem(lqgame::random_instance(3, 2, 1, 7)?, PolicyBox::default(), 200, 7)
}

/// Wraps an LQ instance, estimating constants and locating the joint
/// Riccati fixed point by iterated best responses.
pub fn lq_problem(spec: lqgame::LQGameSpec, policy_box: PolicyBox, samples: usize, seed: u64) -> Result<ProblemSpec> {
    let game = lqgame::lq_as_game(spec, &policy_box, samples, seed)?;
    let known_ne = lq_joint_fixed_point(&game).map(|p| KnownNe::Points(vec![p]));
    let dim = game.layout().total_dim();
    Ok(ProblemSpec {
        name: "lq".into(),
        game: Arc::new(game),
        known_ne,
        test_box: TestBox::cube(dim, -policy_box.radius, policy_box.radius),
        notes: "linear-quadratic game with estimated constants; profiles are row-major gains".into(),
    })
}

fn lq_joint_fixed_point(game: &LQGame) -> Option<Vec<f64>> {
    let mut x = BlockVector::zeros(game.layout().clone());
    for _ in 0..10_000 {
        let mut moved = 0.0f64;
        for i in 0..game.num_players() {
            let br = game.best_response(i, &x).ok()?;
            for (a, b) in x.block(i).ok()?.iter().zip(&br) {
                moved = moved.max((a - b).abs());
            }
            x.set_block(i, &br).ok()?;
        }
        if moved <= 1e-13 {
            return Some(x.into_vec());
        }
    }
    None
}

/// Looks up a registered problem with its default parameters.
pub fn registry_get(name: &str) -> Result<ProblemSpec> {
    match name {
        "f1" => Ok(f1()),
        "f2" => Ok(f2()),
        "f3" => Ok(f3()),
        "f4" => Ok(f4()),
        "f5" => Ok(f5()),
        "f6" => Ok(f6()),
        "saddle" => Ok(saddle()),
        "resource" => Ok(resource()),
        "cournot-linear" => build_cournot(2, Demand::Linear, 10.0, 1.0, &[1.0, 1.0]),
        "cournot-quadratic" => build_cournot(2, Demand::Quadratic, 10.0, 1.0, &[1.0, 1.0]),
        "lq" => lq_default(),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// Closed-form values for cross-checking the generic machinery.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownValues {
    pub f: Vec<f64>,
    /// `G_F(x) = Σ_i f_i(x*_i(x), x_{-i})` where a closed form exists.
    pub g_f: Option<f64>,
}

impl KnownValues {
    pub fn gap(&self) -> Option<f64> {
        self.g_f.map(|g| self.f.iter().sum::<f64>() - g)
    }
}

pub fn known_function_values(name: &str, x: &[f64]) -> Result<KnownValues> {
    if x.len() != 2 {
        return Err(Error::Dimension { expected: 2, got: x.len() });
    }
    let (x1, x2) = (x[0], x[1]);
    let response_value = |y: f64| 2.0 * (y * y - 1.0).powi(2) / (y * y + 1.0);
    match name {
        "f1" => {
            let v = f1_value(x);
            Ok(KnownValues { f: vec![v, v], g_f: Some(response_value(x2) + response_value(x1)) })
        }
        "f2" => {
            let v = f2_value(x);
            Ok(KnownValues { f: vec![v, v], g_f: None })
        }
        "f4" => {
            let v = f4_value(x);
            Ok(KnownValues { f: vec![v, v], g_f: Some(0.0) })
        }
        "f6" => Ok(KnownValues { f: vec![x1 * x1 + x2 * x2, f4_value(x)], g_f: Some(x2 * x2) }),
        "resource" => Ok(KnownValues {
            f: vec![x1 * x1 - 2.0 * x1 * x2, x2 * x2 - 2.0 * x1 * x2],
            g_f: Some(-(x1 * x1 + x2 * x2)),
        }),
        other => Err(Error::NoClosedForm(other.to_string())),
    }
}
