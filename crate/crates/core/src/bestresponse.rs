//! Exact and approximated best responses, the gap `F - G_F`, and `∇G_F`.

use serde::{Deserialize, Serialize};

use crate::blockvec::BlockVector;
use crate::error::{Error, Result};
use crate::game::{check_point, sum_f, Game};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseSource {
    Exact,
    Abr,
}

/// Per-player responses `y_i` together with `Σ_i ∇f_i(y_i, x_{-i})`.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseResult {
    pub responses: Vec<Vec<f64>>,
    pub grad_g: BlockVector,
    pub source: ResponseSource,
    /// Inner iterations used; 0 for exact responses.
    pub abr_iters: usize,
}

fn grad_g_at(p: &dyn Game, x: &BlockVector, responses: &[Vec<f64>]) -> Result<BlockVector> {
    let mut out = BlockVector::zeros(x.layout().clone());
    for (i, y) in responses.iter().enumerate() {
        let xi = x.with_block(i, y)?;
        out.axpy(1.0, &p.full_gradient(i, &xi))?;
    }
    Ok(out)
}

/// Approximate best responses by `t_prime` gradient steps of size `beta` on
/// every player's own objective, each started from `x_j`.
pub fn abr(p: &dyn Game, x: &BlockVector, beta: f64, t_prime: usize) -> Result<BestResponseResult> {
    check_point(p, x)?;
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("ABR step must be positive, got {beta}")));
    }
    let n = p.num_players();
    let mut responses = Vec::with_capacity(n);
    for j in 0..n {
        let mut y = x.clone();
        for _ in 0..t_prime {
            let g = p.own_gradient(j, &y);
            y.axpy_block(j, -beta, &g)?;
        }
        responses.push(y.block(j)?.to_vec());
    }
    let grad_g = grad_g_at(p, x, &responses)?;
    Ok(BestResponseResult { responses, grad_g, source: ResponseSource::Abr, abr_iters: t_prime })
}

fn iters_for_ratio(ratio: f64, mu: f64, beta: f64) -> Result<usize> {
    let contraction = mu * beta;
    if !(contraction > 0.0 && contraction < 1.0) {
        return Err(Error::InvalidParameter(format!("need 0 < mu*beta < 1, got {contraction}")));
    }
    if !(ratio > 0.0) {
        return Err(Error::InvalidParameter(format!("accuracy target must be positive, got {ratio}")));
    }
    let t = ratio.ln() / (1.0 / (1.0 - contraction)).ln();
    Ok(if t <= 0.0 { 0 } else { t.ceil() as usize })
}

/// Inner iterations guaranteeing `‖∇G_F - ∇G̃_F‖² <= δ Σ_i ‖∇_i f_i‖²`:
/// `ceil(log(nL²/(μ²δ)) / log(1/(1-μβ)))`.
pub fn abr_iters_for(delta: f64, n: usize, l: f64, mu: f64, beta: f64) -> Result<usize> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    iters_for_ratio(n as f64 * l * l / (mu * mu * delta), mu, beta)
}

/// The squared-accuracy form `ceil(log(nL²/(μ²δ²)) / log(1/(1-μβ)))`.
pub fn abr_iters_for_delta_sq(delta: f64, n: usize, l: f64, mu: f64, beta: f64) -> Result<usize> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    iters_for_ratio(n as f64 * l * l / (mu * mu * delta * delta), mu, beta)
}

/// Inner iterations tied to the outer step: `ceil(log(nL²/(μ²α⁴)) / log(1/(1-μβ)))`.
pub fn abr_iters_for_alpha(alpha: f64, n: usize, l: f64, mu: f64, beta: f64) -> Result<usize> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    iters_for_ratio(n as f64 * l * l / (mu * mu * alpha.powi(4)), mu, beta)
}

/// Exact best responses from the problem's provider and `∇G_F` from them.
pub fn exact_best_responses(p: &dyn Game, x: &BlockVector) -> Result<BestResponseResult> {
    check_point(p, x)?;
    let responses = (0..p.num_players()).map(|i| p.best_response(i, x)).collect::<Result<Vec<_>>>()?;
    let grad_g = grad_g_at(p, x, &responses)?;
    Ok(BestResponseResult { responses, grad_g, source: ResponseSource::Exact, abr_iters: 0 })
}

/// Exact responses when the problem has them, otherwise ABR with `(beta, t_prime)`.
pub fn best_responses_or_abr(p: &dyn Game, x: &BlockVector, beta: f64, t_prime: usize) -> Result<BestResponseResult> {
    if p.has_best_response() {
        exact_best_responses(p, x)
    } else {
        abr(p, x, beta, t_prime)
    }
}

/// `f_i(y_i, x_{-i})` for every player.
pub fn response_values(p: &dyn Game, x: &BlockVector, br: &BestResponseResult) -> Result<Vec<f64>> {
    br.responses
        .iter()
        .enumerate()
        .map(|(i, y)| Ok(p.objective(i, &x.with_block(i, y)?)))
        .collect()
}

/// `G_F(x) = Σ_i f_i(y_i, x_{-i})`.
pub fn g_value(p: &dyn Game, x: &BlockVector, br: &BestResponseResult) -> f64 {
    response_values(p, x, br).map(|v| v.iter().sum()).unwrap_or(f64::NAN)
}

/// `F(x) - Σ_i f_i(y_i, x_{-i})`, summed per player so that each term
/// `f_i(x) - f_i(y_i, x_{-i})` is formed before accumulation.
pub fn gap(p: &dyn Game, x: &BlockVector, br: &BestResponseResult) -> f64 {
    let mut total = 0.0;
    for (i, y) in br.responses.iter().enumerate() {
        let Ok(xi) = x.with_block(i, y) else { return f64::NAN };
        total += p.objective(i, x) - p.objective(i, &xi);
    }
    total
}

/// `F(x)` and `G_F(x)` separately, for logging.
pub fn f_and_g(p: &dyn Game, x: &BlockVector, br: &BestResponseResult) -> (f64, f64) {
    (sum_f(p, x), g_value(p, x, br))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockvec::BlockLayout;
    use crate::game::{FnGame, ProblemConstants};
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
        .with_best_response(|i, x| vec![x[1 - i]])
    }

    #[test]
    fn abr_with_zero_iterations_returns_the_full_gradient_sum() {
        let p = resource();
        let x = p.point(vec![0.4, -1.3]).unwrap();
        let br = abr(&p, &x, 0.1, 0).unwrap();
        assert_eq!(br.responses, vec![vec![0.4], vec![-1.3]]);
        let mut expect = p.full_gradient(0, &x);
        expect.axpy(1.0, &p.full_gradient(1, &x)).unwrap();
        assert_eq!(br.grad_g, expect);
    }

    #[test]
    fn abr_single_step_on_f4() {
        let p = f4();
        let x = p.point(vec![1.0, 0.0]).unwrap();
        let br = abr(&p, &x, 0.25, 1).unwrap();
        // scalar oracle of y <- y - beta * 2 (y + x2)
        let oracle = 1.0 - 0.25 * 2.0 * (1.0 + 0.0);
        assert_eq!(br.responses[0], vec![oracle]);
        assert_eq!(oracle, 0.5);
    }

    #[test]
    fn abr_one_step_converges_on_unit_quadratic() {
        let c = 1.7;
        let p = FnGame::new(
            BlockLayout::scalar(1).unwrap(),
            ProblemConstants::analytic(2.0, 2.0).unwrap(),
            move |_, x| (x[0] - c).powi(2),
            move |_, x| vec![2.0 * (x[0] - c)],
        );
        let br = abr(&p, &p.point(vec![-4.0]).unwrap(), 0.5, 1).unwrap();
        assert!((br.responses[0][0] - c).abs() <= 1e-15);
    }

    #[test]
    fn abr_iteration_counts() {
        assert_eq!(abr_iters_for(1e-4, 2, 2.0, 1.0, 0.5).unwrap(), 17);
        assert_eq!(abr_iters_for(8.0, 2, 2.0, 1.0, 0.5).unwrap(), 0);
        assert!(abr_iters_for(1e-4, 2, 2.0, 1.0, 1.0).is_err());
        assert!(abr_iters_for(0.0, 2, 2.0, 1.0, 0.5).is_err());
        // squared form with delta = sqrt(1e-4) reproduces the plain form
        assert_eq!(abr_iters_for_delta_sq(1e-2, 2, 2.0, 1.0, 0.5).unwrap(), 17);
        assert_eq!(abr_iters_for_alpha(0.1, 2, 2.0, 1.0, 0.5).unwrap(), abr_iters_for(1e-4, 2, 2.0, 1.0, 0.5).unwrap());
    }

    #[test]
    fn halving_delta_adds_log_ratio_iterations() {
        let (n, l, mu, beta) = (3, 5.0, 1.5, 0.2);
        let per = 2f64.ln() / (1.0f64 / (1.0 - mu * beta)).ln();
        for delta in [1e-1, 1e-3, 1e-7] {
            let a = abr_iters_for(delta, n, l, mu, beta).unwrap() as f64;
            let b = abr_iters_for(delta / 2.0, n, l, mu, beta).unwrap() as f64;
            assert!(b - a >= per.floor() && b - a <= per.ceil());
        }
    }

    #[test]
    fn exact_responses_and_gap_on_resource() {
        let p = resource();
        let x = p.point(vec![1.0, 0.0]).unwrap();
        let br = exact_best_responses(&p, &x).unwrap();
        assert_eq!(br.responses, vec![vec![0.0], vec![1.0]]);
        assert_eq!(gap(&p, &x, &br), 2.0);
        let ne = p.point(vec![0.0, 0.0]).unwrap();
        let br = exact_best_responses(&p, &ne).unwrap();
        assert_eq!(br.responses, vec![vec![0.0], vec![0.0]]);
        assert_eq!(gap(&p, &ne, &br), 0.0);
    }

    #[test]
    fn exact_requires_provider() {
        let p = FnGame::new(BlockLayout::scalar(1).unwrap(), ProblemConstants::unknown(), |_, x| x[0] * x[0], |_, x| vec![2.0 * x[0]]);
        assert_eq!(exact_best_responses(&p, &p.point(vec![1.0]).unwrap()), Err(Error::NoBestResponse(0)));
    }

    proptest! {
        #[test]
        fn resource_gap_closed_form(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let p = resource();
            let x = p.point(vec![a, b]).unwrap();
            let br = exact_best_responses(&p, &x).unwrap();
            let g = gap(&p, &x, &br);
            prop_assert!((g - 2.0 * (a - b).powi(2)).abs() <= 1e-10 * (1.0 + g.abs()));
            let gv = g_value(&p, &x, &br);
            prop_assert!((gv + a * a + b * b).abs() <= 1e-10 * (1.0 + gv.abs()));
        }

        #[test]
        fn exact_gap_is_nonnegative_on_f4(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let p = f4();
            let x = p.point(vec![a, b]).unwrap();
            let br = exact_best_responses(&p, &x).unwrap();
            prop_assert!(gap(&p, &x, &br) >= -1e-10);
            // grad G_F vanishes identically on f4
            prop_assert!(br.grad_g.as_slice().iter().all(|v| *v == 0.0));
        }
    }
}
