//! The game abstraction and the aggregate quantities built from it.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::blockvec::{sq_norm, BlockLayout, BlockVector};
use crate::error::{Error, Result};

/// Default ε used when reporting stationarity.
pub const DEFAULT_STATIONARITY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Analytic,
    Estimated,
    Unknown,
}

/// Smoothness constant `L`, n-sided PL constant `mu` and where they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub l: f64,
    pub mu: f64,
    pub provenance: Provenance,
}

impl ProblemConstants {
    pub fn analytic(l: f64, mu: f64) -> Result<Self> {
        Self::checked(l, mu, Provenance::Analytic)
    }

    pub fn estimated(l: f64, mu: f64) -> Result<Self> {
        Self::checked(l, mu, Provenance::Estimated)
    }

    pub fn unknown() -> Self {
        Self { l: f64::NAN, mu: f64::NAN, provenance: Provenance::Unknown }
    }

    fn checked(l: f64, mu: f64, provenance: Provenance) -> Result<Self> {
        if !(mu > 0.0 && l.is_finite() && l >= mu) {
            return Err(Error::InvalidParameter(format!("constants need L >= mu > 0, got L={l}, mu={mu}")));
        }
        Ok(Self { l, mu, provenance })
    }

    pub fn is_known(&self) -> bool {
        self.provenance != Provenance::Unknown
    }

    /// `(L, mu)`, or an error when the constants are unknown.
    pub fn require(&self) -> Result<(f64, f64)> {
        if self.is_known() {
            Ok((self.l, self.mu))
        } else {
            Err(Error::UnknownConstants)
        }
    }

    /// `L' = L + L^2 / mu`, the per-player smoothness of G_F.
    pub fn l_prime(&self) -> f64 {
        self.l + self.l * self.l / self.mu
    }
}

/// An n-player game on `R^{d_1} x ... x R^{d_n}`.
///
/// Implementations must be pure: the same `x` always yields the same values.
/// Methods assume `x` conforms to [`Game::layout`] and `i < n`; the free
/// functions in this module validate before calling them.
pub trait Game: Send + Sync {
    fn layout(&self) -> &Arc<BlockLayout>;

    /// `f_i(x)`. May be `+inf` outside the domain where the objective is finite.
    fn objective(&self, i: usize, x: &BlockVector) -> f64;

    /// `∇f_i(x)` with respect to every block.
    fn full_gradient(&self, i: usize, x: &BlockVector) -> BlockVector;

    /// `∇_i f_i(x)`.
    fn own_gradient(&self, i: usize, x: &BlockVector) -> Vec<f64> {
        self.full_gradient(i, x).block(i).expect("player index within layout").to_vec()
    }

    fn has_best_response(&self) -> bool {
        false
    }

    /// A minimizer of `f_i(., x_{-i})`.
    fn best_response(&self, i: usize, _x: &BlockVector) -> Result<Vec<f64>> {
        Err(Error::NoBestResponse(i))
    }

    fn constants(&self) -> ProblemConstants;

    fn num_players(&self) -> usize {
        self.layout().num_blocks()
    }
}

pub(crate) fn check_point(p: &dyn Game, x: &BlockVector) -> Result<()> {
    let layout = p.layout();
    if x.layout().block_dims() != layout.block_dims() {
        return Err(Error::Dimension { expected: layout.total_dim(), got: x.as_slice().len() });
    }
    Ok(())
}

pub(crate) fn check_player(p: &dyn Game, i: usize) -> Result<()> {
    p.layout().check_block(i)
}

/// `∇_i f_i(x)`.
pub fn partial_grad_own(p: &dyn Game, i: usize, x: &BlockVector) -> Result<Vec<f64>> {
    check_player(p, i)?;
    check_point(p, x)?;
    Ok(p.own_gradient(i, x))
}

/// `F(x) = Σ_i f_i(x)`.
pub fn sum_f(p: &dyn Game, x: &BlockVector) -> f64 {
    (0..p.num_players()).map(|i| p.objective(i, x)).sum()
}

/// `∇_i F_{-i}(x) = Σ_{j≠i} ∇_i f_j(x)`.
pub fn grad_f_minus_i(p: &dyn Game, i: usize, x: &BlockVector) -> Result<Vec<f64>> {
    check_player(p, i)?;
    check_point(p, x)?;
    let mut out = vec![0.0; p.layout().block_dim(i)?];
    for j in (0..p.num_players()).filter(|&j| j != i) {
        let g = p.full_gradient(j, x);
        for (o, v) in out.iter_mut().zip(g.block(i)?) {
            *o += v;
        }
    }
    Ok(out)
}

/// `∇_i F_{-i}(x)` for every `i`, computed from one pass over the full gradients.
pub fn grad_f_minus_all(p: &dyn Game, x: &BlockVector) -> Vec<Vec<f64>> {
    let n = p.num_players();
    let grads: Vec<BlockVector> = (0..n).map(|j| p.full_gradient(j, x)).collect();
    (0..n)
        .map(|i| {
            let mut out = vec![0.0; p.layout().block_dims()[i]];
            for (_, g) in grads.iter().enumerate().filter(|(j, _)| *j != i) {
                for (o, v) in out.iter_mut().zip(g.block(i).expect("valid block")) {
                    *o += v;
                }
            }
            out
        })
        .collect()
}

/// Central differences of `f_i` at `x` in every coordinate.
pub fn finite_diff_gradient(p: &dyn Game, i: usize, x: &BlockVector, h: f64) -> Result<BlockVector> {
    check_player(p, i)?;
    check_point(p, x)?;
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut out = BlockVector::zeros(x.layout().clone());
    for k in 0..x.as_slice().len() {
        let orig = x.as_slice()[k];
        probe.as_mut_slice()[k] = orig + h;
        let fp = p.objective(i, &probe);
        probe.as_mut_slice()[k] = orig - h;
        let fm = p.objective(i, &probe);
        probe.as_mut_slice()[k] = orig;
        out.as_mut_slice()[k] = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

/// Own-block gradients `∇_i f_i(x)` for all players.
pub fn own_gradients(p: &dyn Game, x: &BlockVector) -> Vec<Vec<f64>> {
    (0..p.num_players()).map(|i| p.own_gradient(i, x)).collect()
}

/// `D = Σ_i ‖∇_i f_i(x)‖²`.
pub fn own_grad_sq(p: &dyn Game, x: &BlockVector) -> f64 {
    (0..p.num_players()).map(|i| sq_norm(&p.own_gradient(i, x))).sum()
}

/// `max_i ‖∇_i f_i(x)‖`; zero exactly at partial-stationary points.
pub fn stationarity_residual(p: &dyn Game, x: &BlockVector) -> f64 {
    (0..p.num_players())
        .map(|i| sq_norm(&p.own_gradient(i, x)).sqrt())
        .fold(0.0, f64::max)
}

type ObjectiveFn = dyn Fn(usize, &[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync;
type ResponseFn = dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync;

/// A game assembled from closures over the flat coordinate slice.
///
/// The gradient closure returns `∇f_i` with respect to all coordinates.
#[derive(Clone)]
pub struct FnGame {
    layout: Arc<BlockLayout>,
    constants: ProblemConstants,
    objective: Arc<ObjectiveFn>,
    gradient: Arc<GradientFn>,
    response: Option<Arc<ResponseFn>>,
}

impl FnGame {
    pub fn new(
        layout: BlockLayout,
        constants: ProblemConstants,
        objective: impl Fn(usize, &[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(usize, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            layout: Arc::new(layout),
            constants,
            objective: Arc::new(objective),
            gradient: Arc::new(gradient),
            response: None,
        }
    }

    pub fn with_best_response(mut self, response: impl Fn(usize, &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.response = Some(Arc::new(response));
        self
    }

    pub fn point(&self, data: Vec<f64>) -> Result<BlockVector> {
        BlockVector::new(self.layout.clone(), data)
    }
}

impl fmt::Debug for FnGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnGame")
            .field("layout", &self.layout)
            .field("constants", &self.constants)
            .field("has_best_response", &self.response.is_some())
            .finish()
    }
}

impl Game for FnGame {
    fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    fn objective(&self, i: usize, x: &BlockVector) -> f64 {
        (self.objective)(i, x.as_slice())
    }

    fn full_gradient(&self, i: usize, x: &BlockVector) -> BlockVector {
        let g = (self.gradient)(i, x.as_slice());
        BlockVector::new(self.layout.clone(), g).expect("gradient closure returned wrong length")
    }

    fn has_best_response(&self) -> bool {
        self.response.is_some()
    }

    fn best_response(&self, i: usize, x: &BlockVector) -> Result<Vec<f64>> {
        match &self.response {
            Some(r) => Ok(r(i, x.as_slice())),
            None => Err(Error::NoBestResponse(i)),
        }
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f4() -> FnGame {
        FnGame::new(
            BlockLayout::scalar(2).unwrap(),
            ProblemConstants::analytic(4.0, 2.0).unwrap(),
            |_, x| (x[0] + x[1]).powi(2),
            |_, x| {
                let s = 2.0 * (x[0] + x[1]);
                vec![s, s]
            },
        )
        .with_best_response(|i, x| vec![-x[1 - i]])
    }

    fn f6() -> FnGame {
        FnGame::new(
            BlockLayout::scalar(2).unwrap(),
            ProblemConstants::analytic(4.0, 2.0).unwrap(),
            |i, x| if i == 0 { x[0] * x[0] + x[1] * x[1] } else { (x[0] + x[1]).powi(2) },
            |i, x| {
                if i == 0 {
                    vec![2.0 * x[0], 2.0 * x[1]]
                } else {
                    let s = 2.0 * (x[0] + x[1]);
                    vec![s, s]
                }
            },
        )
    }

    fn resource() -> FnGame {
        FnGame::new(
            BlockLayout::scalar(2).unwrap(),
            ProblemConstants::analytic(1.0 + 5f64.sqrt(), 2.0).unwrap(),
            |i, x| x[i] * x[i] - 2.0 * x[0] * x[1],
            |i, x| {
                let j = 1 - i;
                let mut g = vec![0.0; 2];
                g[i] = 2.0 * x[i] - 2.0 * x[j];
                g[j] = -2.0 * x[i];
                g
            },
        )
    }

    #[test]
    fn constants_validation_and_l_prime() {
        let c = ProblemConstants::analytic(2.0, 1.0).unwrap();
        assert_eq!(c.l_prime(), 6.0);
        assert!(ProblemConstants::analytic(1.0, 2.0).is_err());
        assert!(ProblemConstants::analytic(1.0, 0.0).is_err());
        assert_eq!(ProblemConstants::unknown().require(), Err(Error::UnknownConstants));
    }

    #[test]
    fn partial_grad_own_examples() {
        let p = f4();
        let x = p.point(vec![1.0, 1.0]).unwrap();
        assert_eq!(partial_grad_own(&p, 0, &x).unwrap(), vec![4.0]);
        let ne = p.point(vec![0.7, -0.7]).unwrap();
        assert_eq!(partial_grad_own(&p, 1, &ne).unwrap(), vec![0.0]);
        assert!(partial_grad_own(&p, 2, &x).is_err());
    }

    #[test]
    fn sum_f_and_grad_f_minus_i() {
        let p = f6();
        let x = p.point(vec![1.0, 1.0]).unwrap();
        assert_eq!(sum_f(&p, &x), 2.0 + 4.0);
        assert_eq!(grad_f_minus_i(&p, 0, &x).unwrap(), vec![4.0]);
        let r = resource();
        assert_eq!(sum_f(&r, &r.point(vec![0.0, 0.0]).unwrap()), 0.0);
        // potential game: n - 1 copies of the common gradient
        let q = f4();
        let y = q.point(vec![0.3, 1.2]).unwrap();
        assert_eq!(grad_f_minus_i(&q, 0, &y).unwrap(), q.own_gradient(0, &y));
        assert_eq!(grad_f_minus_all(&q, &y)[1], grad_f_minus_i(&q, 1, &y).unwrap());
    }

    #[test]
    fn single_player_has_zero_cross_term() {
        let p = FnGame::new(
            BlockLayout::new(vec![2]).unwrap(),
            ProblemConstants::analytic(2.0, 2.0).unwrap(),
            |_, x| x[0] * x[0] + x[1] * x[1],
            |_, x| vec![2.0 * x[0], 2.0 * x[1]],
        );
        let x = p.point(vec![3.0, -1.0]).unwrap();
        assert_eq!(grad_f_minus_i(&p, 0, &x).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn finite_difference_examples() {
        let p = f4();
        let x = p.point(vec![1.0, 1.0]).unwrap();
        let g = finite_diff_gradient(&p, 0, &x, 1e-5).unwrap();
        for v in g.as_slice() {
            assert!((v - 4.0).abs() <= 1e-6);
        }
        let c = FnGame::new(BlockLayout::scalar(2).unwrap(), ProblemConstants::unknown(), |_, _| 3.0, |_, _| vec![0.0; 2]);
        let g = finite_diff_gradient(&c, 1, &c.point(vec![5.0, -2.0]).unwrap(), 1e-3).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0]);
        assert!(finite_diff_gradient(&p, 0, &x, 0.0).is_err());
    }

    #[test]
    fn stationarity_residual_examples() {
        let r = resource();
        assert_eq!(stationarity_residual(&r, &r.point(vec![1.0, 0.0]).unwrap()), 2.0);
        let p = f4();
        assert_eq!(stationarity_residual(&p, &p.point(vec![2.0, -2.0]).unwrap()), 0.0);
    }

    proptest! {
        #[test]
        fn own_plus_cross_is_total(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            for p in [f6(), resource(), f4()] {
                let x = p.point(vec![a, b]).unwrap();
                for i in 0..2 {
                    let total: f64 = (0..2).map(|j| p.full_gradient(j, &x).block(i).unwrap()[0]).sum();
                    let split = grad_f_minus_i(&p, i, &x).unwrap()[0] + p.own_gradient(i, &x)[0];
                    prop_assert!((total - split).abs() <= 1e-12 * (1.0 + total.abs()));
                }
            }
        }

        #[test]
        fn quadratic_central_differences_are_exact(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let p = f6();
            let x = p.point(vec![a, b]).unwrap();
            for i in 0..2 {
                let fd = finite_diff_gradient(&p, i, &x, 1e-3).unwrap();
                let an = p.full_gradient(i, &x);
                for (u, v) in fd.as_slice().iter().zip(an.as_slice()) {
                    prop_assert!((u - v).abs() <= 1e-8 * (1.0 + v.abs()));
                }
            }
        }
    }
}
