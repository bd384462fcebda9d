//! Entropic optimal transport between discrete measures.
//!
//! The Schrödinger system is solved by alternating exact block updates of the
//! two potentials (Sinkhorn iteration), carried out entirely in the log
//! domain. With cost `c(x, y) = |x - y|^2 / 2` the optimal plan is
//!
//! ```text
//! gamma_ij = a_i b_j exp((u_j + v_i - c_ij) / eps)
//! ```
//!
//! where `v` lives on the atoms of `alpha` and `u` on the atoms of `mu`.
//! Both potentials extend to all of R^d through the log-sum-exp formulas,
//! which is what the gradient and Hessian queries evaluate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{sq_dist, DiscreteMeasure};
use crate::par;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOptions {
    /// Maximum absolute violation of either marginal of the plan.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Converged (or, via [`sinkhorn_iterate`], partially converged) dual
/// potentials for `OT_eps(alpha, mu)`.
#[derive(Debug, Clone)]
pub struct SchrodingerSolution {
    epsilon: f64,
    /// Potential on the atoms of `mu`.
    u: Vec<f64>,
    /// Potential on the atoms of `alpha`.
    v: Vec<f64>,
    alpha: DiscreteMeasure,
    mu: DiscreteMeasure,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    marginal_error: f64,
    iterations: usize,
}

/// Conditional law `gamma(. | x)` as a probability vector over the atoms of `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanQuery {
    pub weights: Vec<f64>,
}

fn log_weights(m: &DiscreteMeasure) -> Vec<f64> {
    m.weights()
        .iter()
        .map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
        .collect()
}

/// `log sum_k exp(z_k)` with the running maximum factored out.
fn log_sum_exp(z: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = z.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut s = 0.0;
    for t in z {
        s += (t - max).exp();
    }
    max + s.ln()
}

/// Dense half squared-distance matrix, row-major `n x m`.
fn half_cost(alpha: &DiscreteMeasure, mu: &DiscreteMeasure) -> Vec<f64> {
    let m = mu.len();
    let rows = par::map_range_sized(alpha.len(), m * alpha.dim(), |i| {
        let x = alpha.point(i);
        (0..m).map(|j| 0.5 * sq_dist(x, mu.point(j))).collect::<Vec<_>>()
    });
    rows.concat()
}

fn transpose(c: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            t[j * n + i] = c[i * m + j];
        }
    }
    t
}

struct Workspace<'a> {
    eps: f64,
    n: usize,
    m: usize,
    cost: Vec<f64>,
    cost_t: Vec<f64>,
    log_a: &'a [f64],
    log_b: &'a [f64],
}

impl Workspace<'_> {
    /// `v_i = -eps log sum_j b_j exp((u_j - c_ij) / eps)`.
    fn update_v(&self, u: &[f64]) -> Vec<f64> {
        let (eps, m) = (self.eps, self.m);
        par::map_range_sized(self.n, m, |i| {
            let row = &self.cost[i * m..(i + 1) * m];
            -eps * log_sum_exp((0..m).map(|j| self.log_b[j] + (u[j] - row[j]) / eps))
        })
    }

    /// `u_j = -eps log sum_i a_i exp((v_i - c_ij) / eps)`.
    fn update_u(&self, v: &[f64]) -> Vec<f64> {
        let (eps, n) = (self.eps, self.n);
        par::map_range_sized(self.m, n, |j| {
            let col = &self.cost_t[j * n..(j + 1) * n];
            -eps * log_sum_exp((0..n).map(|i| self.log_a[i] + (v[i] - col[i]) / eps))
        })
    }
}

/// Row marginal defect of the plan given the current `v` and the value the
/// next exact `v` update would produce: `a_i |exp((v_i - v'_i)/eps) - 1|`.
fn row_defect(a: &[f64], v: &[f64], v_next: &[f64], eps: f64) -> f64 {
    a.iter()
        .zip(v.iter().zip(v_next))
        .map(|(&ai, (&vi, &wi))| ai * ((vi - wi) / eps).exp_m1().abs())
        .fold(0.0, f64::max)
}

/// Solves the Schrödinger system between `alpha` and `mu`.
pub fn sinkhorn_solve(
    alpha: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    epsilon: f64,
    opts: SinkhornOptions,
) -> Result<SchrodingerSolution> {
    sinkhorn_solve_warm(alpha, mu, epsilon, opts, None)
}

/// [`sinkhorn_solve`] starting from a given potential on the atoms of `mu`.
pub fn sinkhorn_solve_warm(
    alpha: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    epsilon: f64,
    opts: SinkhornOptions,
    warm_u: Option<&[f64]>,
) -> Result<SchrodingerSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Sinkhorn tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let sol = run_sinkhorn(alpha, mu, epsilon, opts.max_iter, Some(opts.tol), warm_u)?;
    if sol.marginal_error <= opts.tol {
        Ok(sol)
    } else {
        Err(Error::NotConverged {
            iterations: sol.iterations,
            marginal_error: sol.marginal_error,
        })
    }
}

/// Runs exactly `sweeps` Sinkhorn sweeps (no stopping test) and returns
/// whatever potentials result, gauge-fixed. Useful for weak-duality checks.
pub fn sinkhorn_iterate(
    alpha: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    epsilon: f64,
    sweeps: usize,
) -> Result<SchrodingerSolution> {
    run_sinkhorn(alpha, mu, epsilon, sweeps, None, None)
}

fn run_sinkhorn(
    alpha: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    epsilon: f64,
    max_iter: usize,
    tol: Option<f64>,
    warm_u: Option<&[f64]>,
) -> Result<SchrodingerSolution> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::EpsilonNonPositive(epsilon));
    }
    if alpha.dim() != mu.dim() {
        return Err(Error::DimensionMismatch(format!(
            "alpha has dimension {}, mu has dimension {}",
            alpha.dim(),
            mu.dim()
        )));
    }
    let (n, m) = (alpha.len(), mu.len());
    let mut u = match warm_u {
        Some(w) if w.len() == m && w.iter().all(|x| x.is_finite()) => w.to_vec(),
        Some(w) => {
            return Err(Error::DimensionMismatch(format!(
                "warm start has {} entries, expected {m} finite values",
                w.len()
            )))
        }
        None => vec![0.0; m],
    };
    let log_a = log_weights(alpha);
    let log_b = log_weights(mu);
    let cost = half_cost(alpha, mu);
    let ws = Workspace {
        eps: epsilon,
        n,
        m,
        cost_t: transpose(&cost, n, m),
        cost,
        log_a: &log_a,
        log_b: &log_b,
    };

    let mut v = ws.update_v(&u);
    let mut iterations = 0;
    while iterations < max_iter {
        u = ws.update_u(&v);
        iterations += 1;
        let v_next = ws.update_v(&u);
        // (u, v) has exact columns; its row defect is read off v_next.
        if tol.is_some_and(|tol| row_defect(alpha.weights(), &v, &v_next, epsilon) <= tol) {
            break;
        }
        v = v_next;
    }

    let shift = par::pairwise_sum(
        &u.iter()
            .zip(mu.weights())
            .map(|(uj, bj)| uj * bj)
            .collect::<Vec<_>>(),
    );
    for uj in &mut u {
        *uj -= shift;
    }
    for vi in &mut v {
        *vi += shift;
    }

    let mut sol = SchrodingerSolution {
        epsilon,
        u,
        v,
        alpha: alpha.clone(),
        mu: mu.clone(),
        log_a: log_a.clone(),
        log_b: log_b.clone(),
        marginal_error: f64::INFINITY,
        iterations,
    };
    sol.marginal_error = sol.compute_marginal_error_with(&ws.cost);
    Ok(sol)
}

impl SchrodingerSolution {
    /// Assembles a solution from explicit potentials, measuring its
    /// marginal violation. No iteration is performed.
    pub fn from_potentials(
        alpha: &DiscreteMeasure,
        mu: &DiscreteMeasure,
        epsilon: f64,
        u: Vec<f64>,
        v: Vec<f64>,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::EpsilonNonPositive(epsilon));
        }
        if u.len() != mu.len() || v.len() != alpha.len() || alpha.dim() != mu.dim() {
            return Err(Error::DimensionMismatch(
                "potential lengths do not match the measures".into(),
            ));
        }
        let mut sol = Self {
            epsilon,
            u,
            v,
            log_a: log_weights(alpha),
            log_b: log_weights(mu),
            alpha: alpha.clone(),
            mu: mu.clone(),
            marginal_error: f64::INFINITY,
            iterations: 0,
        };
        sol.marginal_error = sol.compute_marginal_error_with(&half_cost(alpha, mu));
        Ok(sol)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Potential on the atoms of `mu`.
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Potential on the atoms of `alpha`.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn alpha(&self) -> &DiscreteMeasure {
        &self.alpha
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn marginal_error(&self) -> f64 {
        self.marginal_error
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Same plan with `u + c` and `v - c`.
    pub fn with_gauge_shift(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.u.iter_mut().for_each(|x| *x += c);
        s.v.iter_mut().for_each(|x| *x -= c);
        s
    }

    fn plan_rows_with(&self, cost: &[f64]) -> Vec<Vec<f64>> {
        let (m, eps) = (self.mu.len(), self.epsilon);
        par::map_range_sized(self.alpha.len(), m, |i| {
            (0..m)
                .map(|j| {
                    (self.log_a[i] + self.log_b[j] + (self.u[j] + self.v[i] - cost[i * m + j]) / eps)
                        .exp()
                })
                .collect()
        })
    }

    fn compute_marginal_error_with(&self, cost: &[f64]) -> f64 {
        let rows = self.plan_rows_with(cost);
        let row_err = rows
            .iter()
            .zip(self.alpha.weights())
            .map(|(r, a)| (par::pairwise_sum(r) - a).abs())
            .fold(0.0, f64::max);
        let m = self.mu.len();
        let col_err = (0..m)
            .map(|j| {
                let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                (par::pairwise_sum(&col) - self.mu.weights()[j]).abs()
            })
            .fold(0.0, f64::max);
        row_err.max(col_err)
    }

    /// The Gibbs plan as a dense row-major `n x m` matrix.
    pub fn plan(&self) -> Vec<f64> {
        self.plan_rows_with(&half_cost(&self.alpha, &self.mu)).concat()
    }

    /// Primal objective `1/2 int |x-y|^2 dgamma + eps H(gamma | alpha x mu)`.
    pub fn ot_eps_value(&self) -> f64 {
        let cost = half_cost(&self.alpha, &self.mu);
        let rows = self.plan_rows_with(&cost);
        let m = self.mu.len();
        let terms: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let t: Vec<f64> = (0..m)
                    .map(|j| {
                        if r[j] == 0.0 {
                            0.0
                        } else {
                            // eps * log(gamma_ij / (a_i b_j)) = u_j + v_i - c_ij
                            r[j] * (self.u[j] + self.v[i])
                        }
                    })
                    .collect();
                par::pairwise_sum(&t)
            })
            .collect();
        par::pairwise_sum(&terms)
    }

    /// `int |x - y|^2 dgamma` (full squared distance, not halved).
    pub fn transport_cost(&self) -> f64 {
        let cost = half_cost(&self.alpha, &self.mu);
        let rows = self.plan_rows_with(&cost);
        let m = self.mu.len();
        let terms: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let t: Vec<f64> = (0..m).map(|j| 2.0 * cost[i * m + j] * r[j]).collect();
                par::pairwise_sum(&t)
            })
            .collect();
        par::pairwise_sum(&terms)
    }

    /// Dual objective
    /// `eps + int u dmu + int v dalpha - eps int int exp((u + v - c)/eps) dalpha dmu`.
    pub fn dual_value(&self) -> f64 {
        let cost = half_cost(&self.alpha, &self.mu);
        let rows = self.plan_rows_with(&cost);
        let mass = par::pairwise_sum(&rows.iter().map(|r| par::pairwise_sum(r)).collect::<Vec<_>>());
        let ub: Vec<f64> = self.u.iter().zip(self.mu.weights()).map(|(u, b)| u * b).collect();
        let va: Vec<f64> = self.v.iter().zip(self.alpha.weights()).map(|(v, a)| v * a).collect();
        self.epsilon + par::pairwise_sum(&ub) + par::pairwise_sum(&va) - self.epsilon * mass
    }

    fn logits(&self, x: &[f64]) -> impl Iterator<Item = f64> + Clone + '_ {
        let eps = self.epsilon;
        let x = x.to_vec();
        (0..self.mu.len())
            .map(move |j| self.log_b[j] + (self.u[j] - 0.5 * sq_dist(&x, self.mu.point(j))) / eps)
    }

    /// Extension of `v` to an arbitrary point:
    /// `v(x) = -eps log sum_j b_j exp((u_j - |x - y_j|^2/2) / eps)`.
    pub fn v_at(&self, x: &[f64]) -> f64 {
        -self.epsilon * log_sum_exp(self.logits(x))
    }

    /// Extension of `u` to an arbitrary point.
    pub fn u_at(&self, y: &[f64]) -> f64 {
        let eps = self.epsilon;
        -eps * log_sum_exp(
            (0..self.alpha.len())
                .map(|i| self.log_a[i] + (self.v[i] - 0.5 * sq_dist(y, self.alpha.point(i))) / eps),
        )
    }

    /// Conditional law `gamma(dy | x)` computed as a shifted softmax.
    pub fn conditional_plan(&self, x: &[f64]) -> PlanQuery {
        let z: Vec<f64> = self.logits(x).collect();
        let max = par::max_of(&z);
        let mut w: Vec<f64> = z.iter().map(|t| (t - max).exp()).collect();
        let total = par::pairwise_sum(&w);
        w.iter_mut().for_each(|t| *t /= total);
        PlanQuery { weights: w }
    }

    /// Conditional mean `int y gamma(dy | x)`.
    pub fn barycentric(&self, x: &[f64]) -> Vec<f64> {
        let w = self.conditional_plan(x).weights;
        self.weighted_mean(&w)
    }

    fn weighted_mean(&self, w: &[f64]) -> Vec<f64> {
        let d = self.mu.dim();
        (0..d)
            .map(|k| {
                let t: Vec<f64> = w
                    .iter()
                    .enumerate()
                    .map(|(j, wj)| wj * self.mu.point(j)[k])
                    .collect();
                par::pairwise_sum(&t)
            })
            .collect()
    }

    /// `grad v(x) = x - int y gamma(dy | x)`.
    pub fn grad_v(&self, x: &[f64]) -> Vec<f64> {
        let b = self.barycentric(x);
        x.iter().zip(b).map(|(xi, bi)| xi - bi).collect()
    }

    /// `D^2 v(x) = Id - Cov_{gamma(.|x)}(y) / eps`.
    pub fn hess_v(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.mu.dim();
        let w = self.conditional_plan(x).weights;
        let mean = self.weighted_mean(&w);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for (j, wj) in w.iter().enumerate() {
            let y = self.mu.point(j);
            for r in 0..d {
                let dr = y[r] - mean[r];
                for c in r..d {
                    cov[(r, c)] += wj * dr * (y[c] - mean[c]);
                }
            }
        }
        for r in 0..d {
            for c in 0..r {
                cov[(r, c)] = cov[(c, r)];
            }
        }
        DMatrix::identity(d, d) - cov / self.epsilon
    }
}

/// `int c dgamma + eps H(gamma | alpha x mu)` for an arbitrary plan
/// (row-major `n x m`), with `c = |x-y|^2/2` and `0 log 0 = 0`.
pub fn entropic_objective(
    alpha: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    plan: &[f64],
    epsilon: f64,
) -> f64 {
    let m = mu.len();
    let terms: Vec<f64> = (0..alpha.len())
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| {
            let g = plan[i * m + j];
            if g == 0.0 {
                return 0.0;
            }
            let prod = alpha.weights()[i] * mu.weights()[j];
            0.5 * sq_dist(alpha.point(i), mu.point(j)) * g + epsilon * g * (g / prod).ln()
        })
        .collect();
    par::pairwise_sum(&terms)
}

/// The product coupling `alpha x mu`, row-major.
pub fn product_plan(alpha: &DiscreteMeasure, mu: &DiscreteMeasure) -> Vec<f64> {
    alpha
        .weights()
        .iter()
        .flat_map(|a| mu.weights().iter().map(move |b| a * b))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{quantize_uniform_ball, BallSpec};

    fn two_point_1d(a: f64) -> DiscreteMeasure {
        DiscreteMeasure::new(vec![vec![-a], vec![a]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn dirac_pair_converges_in_one_sweep() {
        let a = DiscreteMeasure::dirac(&[0.0, 0.0, 0.0]).unwrap();
        let b = DiscreteMeasure::dirac(&[1.0, 0.0, 0.0]).unwrap();
        let sol = sinkhorn_solve(&a, &b, 0.1, SinkhornOptions::default()).unwrap();
        assert_eq!(sol.iterations(), 1);
        assert!(sol.marginal_error() <= 1e-15);
        assert_eq!(sol.plan(), vec![1.0]);
        assert!((sol.ot_eps_value() - 0.5).abs() < 1e-15);
        assert!((sol.dual_value() - 0.5).abs() < 1e-15);
        assert_eq!(sol.u()[0], 0.0);
    }

    #[test]
    fn rejects_nonpositive_epsilon_and_dimension_mismatch() {
        let a = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let b = DiscreteMeasure::dirac(&[0.0, 1.0]).unwrap();
        assert!(matches!(
            sinkhorn_solve(&a, &a, 0.0, SinkhornOptions::default()),
            Err(Error::EpsilonNonPositive(_))
        ));
        assert!(matches!(
            sinkhorn_solve(&a, &b, 1.0, SinkhornOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn not_converged_reports_last_error() {
        let spec = BallSpec::new(1.0, 2).unwrap();
        let a = quantize_uniform_ball(spec, 30, 1).unwrap();
        let b = quantize_uniform_ball(spec, 30, 2).unwrap();
        let opts = SinkhornOptions {
            tol: 1e-14,
            max_iter: 3,
        };
        match sinkhorn_solve(&a, &b, 0.01, opts) {
            Err(Error::NotConverged {
                iterations,
                marginal_error,
            }) => {
                assert_eq!(iterations, 3);
                assert!(marginal_error > 1e-14);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn gauge_is_fixed_and_marginals_hold() {
        let spec = BallSpec::new(1.0, 3).unwrap();
        let a = quantize_uniform_ball(spec, 20, 10).unwrap();
        let b = quantize_uniform_ball(spec, 15, 11).unwrap();
        let sol = sinkhorn_solve(&a, &b, 0.1, SinkhornOptions { tol: 1e-10, ..Default::default() })
            .unwrap();
        let gauge: f64 = sol.u().iter().zip(b.weights()).map(|(u, w)| u * w).sum();
        assert!(gauge.abs() < 1e-12);
        let plan = sol.plan();
        assert!(plan.iter().all(|&g| g >= 0.0));
        for i in 0..a.len() {
            let r: f64 = plan[i * b.len()..(i + 1) * b.len()].iter().sum();
            assert!((r - a.weights()[i]).abs() <= 1e-10);
        }
        for j in 0..b.len() {
            let c: f64 = (0..a.len()).map(|i| plan[i * b.len() + j]).sum();
            assert!((c - b.weights()[j]).abs() <= 1e-10);
        }
        assert!((plan.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let spec = BallSpec::new(1.0, 2).unwrap();
        let a = quantize_uniform_ball(spec, 25, 3).unwrap();
        let b = quantize_uniform_ball(spec, 25, 4).unwrap();
        let opts = SinkhornOptions::default();
        let cold = sinkhorn_solve(&a, &b, 0.2, opts).unwrap();
        let moved = a.pushforward(|x| vec![x[0] + 1e-3, x[1]]).unwrap();
        let warm = sinkhorn_solve_warm(&moved, &b, 0.2, opts, Some(cold.u())).unwrap();
        let fresh = sinkhorn_solve(&moved, &b, 0.2, opts).unwrap();
        assert!(warm.iterations() < fresh.iterations());
        assert!((warm.ot_eps_value() - fresh.ot_eps_value()).abs() < 1e-8);
    }

    #[test]
    fn conditional_plan_cases() {
        let b = DiscreteMeasure::dirac(&[0.3]).unwrap();
        let sol = sinkhorn_solve(&two_point_1d(1.0), &b, 0.5, SinkhornOptions::default()).unwrap();
        assert_eq!(sol.conditional_plan(&[7.0]).weights, vec![1.0]);
        assert_eq!(sol.barycentric(&[-3.0]), vec![0.3]);
        assert_eq!(sol.grad_v(&[2.0]), vec![2.0 - 0.3]);
        let h = sol.hess_v(&[1.0]);
        assert_eq!(h[(0, 0)], 1.0);

        let mu = two_point_1d(1.0);
        let sol = sinkhorn_solve(&mu, &mu, 0.5, SinkhornOptions::default()).unwrap();
        let w = sol.conditional_plan(&[0.0]).weights;
        assert!((w[0] - 0.5).abs() < 1e-9 && (w[1] - 0.5).abs() < 1e-9);
        assert!(sol.barycentric(&[0.0])[0].abs() < 1e-9);
    }

    #[test]
    fn large_epsilon_conditional_is_close_to_mu() {
        let spec = BallSpec::new(1.0, 3).unwrap();
        let a = quantize_uniform_ball(spec, 10, 5).unwrap();
        let b = quantize_uniform_ball(spec, 12, 6).unwrap();
        let sol = sinkhorn_solve(&a, &b, 1e3, SinkhornOptions::default()).unwrap();
        for x in [[0.0, 0.0, 0.0], [0.5, -0.5, 0.1], [0.0, 0.0, 1.0]] {
            let w = sol.conditional_plan(&x).weights;
            let tv: f64 = w.iter().zip(b.weights()).map(|(p, q)| (p - q).abs()).sum::<f64>() / 2.0;
            assert!(tv < 1e-3, "tv {tv}");
        }
    }

    #[test]
    fn symmetric_two_point_hessian() {
        // Conditional weights at x = 0 are (1/2, 1/2) by symmetry, so the
        // covariance is the Bernoulli variance (1/4)(2a)^2 = a^2.
        let a = 0.7;
        let eps = 0.3;
        let mu = two_point_1d(a);
        let alpha = DiscreteMeasure::new(vec![vec![-0.2], vec![0.2]], vec![0.5, 0.5]).unwrap();
        let sol = sinkhorn_solve(&alpha, &mu, eps, SinkhornOptions::default()).unwrap();
        let h = sol.hess_v(&[0.0]);
        assert!((h[(0, 0)] - (1.0 - a * a / eps)).abs() < 1e-8);
    }

    #[test]
    fn weak_duality_for_unconverged_potentials() {
        let spec = BallSpec::new(1.0, 2).unwrap();
        let a = quantize_uniform_ball(spec, 16, 7).unwrap();
        let b = quantize_uniform_ball(spec, 16, 8).unwrap();
        let one = sinkhorn_iterate(&a, &b, 0.05, 1).unwrap();
        let exact = sinkhorn_solve(&a, &b, 0.05, SinkhornOptions::default()).unwrap();
        assert!(one.dual_value() <= exact.ot_eps_value() + 1e-12);
    }

    #[test]
    fn entropic_objective_matches_gibbs_value() {
        let spec = BallSpec::new(1.0, 2).unwrap();
        let a = quantize_uniform_ball(spec, 6, 12).unwrap();
        let b = quantize_uniform_ball(spec, 5, 13).unwrap();
        let sol = sinkhorn_solve(&a, &b, 0.2, SinkhornOptions { tol: 1e-12, ..Default::default() })
            .unwrap();
        let direct = entropic_objective(&a, &b, &sol.plan(), 0.2);
        assert!((direct - sol.ot_eps_value()).abs() < 1e-10);
        assert!(direct <= entropic_objective(&a, &b, &product_plan(&a, &b), 0.2));
    }
}
