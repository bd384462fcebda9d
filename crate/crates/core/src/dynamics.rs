//! Entropic semi-geostrophic velocity field and explicit Euler time stepping.
//!
//! For a discrete `alpha` the velocity is `B[alpha](x) = A (x - bary(x))`,
//! where `bary` is the barycentric projection of the entropic plan from
//! `alpha` to the fixed reference `mu0`. One Euler step pushes `alpha`
//! forward under `id + tau B[alpha]`.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::entropic_ot::{sinkhorn_solve_warm, SchrodingerSolution, SinkhornOptions};
use crate::error::{Error, Result};
use crate::measures::{quantize_uniform_ball, BallSpec, DiscreteMeasure};
use crate::par;

const SKEW_TOL: f64 = 1e-14;
const STEP_COUNT_TOL: f64 = 1e-9;
const SUPPORT_SLACK: f64 = 1e-9;

/// Square drift matrix `A`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftMatrix {
    dim: usize,
    entries: Vec<f64>,
    is_skew: bool,
}

impl DriftMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "drift matrix needs {} entries for dimension {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if entries.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("drift matrix has non-finite entries".into()));
        }
        let is_skew = (0..dim).all(|r| {
            (0..dim).all(|c| (entries[r * dim + c] + entries[c * dim + r]).abs() <= SKEW_TOL)
        });
        Ok(Self {
            dim,
            entries,
            is_skew,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
            is_skew: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn is_skew(&self) -> bool {
        self.is_skew
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.dim + c]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.entries
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Rows that are identically zero; the matching coordinates never move.
    pub fn zero_rows(&self) -> Vec<bool> {
        self.entries
            .chunks_exact(self.dim)
            .map(|row| row.iter().all(|&a| a == 0.0))
            .collect()
    }

    /// Euclidean operator norm (largest singular value).
    pub fn op_norm(&self) -> f64 {
        let m = DMatrix::from_row_slice(self.dim, self.dim, &self.entries);
        m.singular_values().max()
    }
}

/// The 3x3 rotation block with `J21 = 1`, `J12 = -1` and zeros elsewhere.
pub fn make_j() -> DriftMatrix {
    DriftMatrix {
        dim: 3,
        entries: vec![0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        is_skew: true,
    }
}

/// Where an initial or reference measure comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeasureSource {
    Points(DiscreteMeasure),
    File {
        path: String,
        measure: DiscreteMeasure,
    },
    Ball {
        spec: BallSpec,
        count: usize,
        seed: u64,
    },
}

impl MeasureSource {
    pub fn resolve(&self) -> Result<DiscreteMeasure> {
        match self {
            MeasureSource::Points(m) | MeasureSource::File { measure: m, .. } => Ok(m.clone()),
            MeasureSource::Ball { spec, count, seed } => quantize_uniform_ball(*spec, *count, *seed),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MeasureSource::Points(m) | MeasureSource::File { measure: m, .. } => m.dim(),
            MeasureSource::Ball { spec, .. } => spec.dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub dim: usize,
    pub drift: DriftMatrix,
    pub epsilon: f64,
    pub tau: f64,
    pub horizon: f64,
    pub alpha0: MeasureSource,
    pub mu0: MeasureSource,
    pub sinkhorn: SinkhornOptions,
    pub warm_start: bool,
    pub snapshot_stride: usize,
}

impl SimulationConfig {
    /// Config with default solver settings and a snapshot at every step.
    pub fn new(
        drift: DriftMatrix,
        epsilon: f64,
        tau: f64,
        horizon: f64,
        alpha0: MeasureSource,
        mu0: MeasureSource,
    ) -> Self {
        Self {
            dim: drift.dim(),
            drift,
            epsilon,
            tau,
            horizon,
            alpha0,
            mu0,
            sinkhorn: SinkhornOptions::default(),
            warm_start: true,
            snapshot_stride: 1,
        }
    }

    /// Number of steps `N = T / tau`.
    pub fn steps(&self) -> Result<usize> {
        self.validate()?;
        Ok((self.horizon / self.tau).round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, constraint: &str| {
            Err(Error::Validation {
                field: field.into(),
                constraint: constraint.into(),
            })
        };
        if self.dim == 0 {
            return bad("dimension", "must be >= 1");
        }
        if self.drift.dim() != self.dim {
            return bad("drift", "matrix size must match dimension");
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad("epsilon", "must be positive");
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad("tau", "must be positive");
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad("horizon", "must be positive");
        }
        let ratio = self.horizon / self.tau;
        if (ratio - ratio.round()).abs() > STEP_COUNT_TOL || ratio.round() < 1.0 {
            return bad("tau", "T/tau must be integral");
        }
        if self.alpha0.dim() != self.dim {
            return bad("alpha0", "dimension must match `dimension`");
        }
        if self.mu0.dim() != self.dim {
            return bad("mu0", "dimension must match `dimension`");
        }
        if !(self.sinkhorn.tol > 0.0) {
            return bad("sinkhorn.tol", "must be positive");
        }
        if self.sinkhorn.max_iter == 0 {
            return bad("sinkhorn.max_iter", "must be >= 1");
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride", "must be >= 1");
        }
        if !(ratio.round() as usize).is_multiple_of(self.snapshot_stride) {
            return bad("snapshot_stride", "must divide T/tau");
        }
        Ok(())
    }
}

/// A-priori constants for the entropic velocity field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryBounds {
    /// Radius of a ball containing both initial measures.
    pub r0: f64,
    pub drift_norm: f64,
    /// Linear-growth constant `C = max(1, R0) ||A||`.
    pub growth: f64,
    /// `R_T = (R0 + 1) exp(C T)`, the radius the scheme provably stays in.
    pub radius_t: f64,
    /// `2 R0 exp(||A|| T)`, the radius used in the weak formulation.
    pub radius_weak: f64,
    /// Lipschitz bound `||A|| (1 + 2 R0^2 / eps)` of the velocity.
    pub lipschitz: f64,
}

impl TheoryBounds {
    pub fn new(r0: f64, drift: &DriftMatrix, epsilon: f64, horizon: f64) -> Self {
        let drift_norm = drift.op_norm();
        let growth = r0.max(1.0) * drift_norm;
        Self {
            r0,
            drift_norm,
            growth,
            radius_t: (r0 + 1.0) * (growth * horizon).exp(),
            radius_weak: 2.0 * r0 * (drift_norm * horizon).exp(),
            lipschitz: drift_norm * (1.0 + 2.0 * r0 * r0 / epsilon),
        }
    }

    /// `(R0 + 1) exp(C t)`.
    pub fn radius_at(&self, t: f64) -> f64 {
        (self.r0 + 1.0) * (self.growth * t).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// `OT_eps(alpha_k, mu0)`.
    pub ot_eps: f64,
    /// Mean of the last coordinate under `alpha_k`.
    pub potential_energy: f64,
    pub support_radius: f64,
    pub sinkhorn_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub measure: DiscreteMeasure,
    pub diagnostics: StepDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub tau: f64,
    pub snapshot_stride: usize,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.snapshots.first().map_or(0, |s| s.measure.dim())
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }
}

/// `A (x - int y gamma(dy | x))`.
pub fn velocity(sol: &SchrodingerSolution, drift: &DriftMatrix, x: &[f64]) -> Vec<f64> {
    drift.apply(&sol.grad_v(x))
}

pub fn potential_energy(m: &DiscreteMeasure) -> f64 {
    m.coordinate_mean(m.dim() - 1)
}

fn diagnostics_for(alpha: &DiscreteMeasure, sol: &SchrodingerSolution) -> StepDiagnostics {
    StepDiagnostics {
        ot_eps: sol.ot_eps_value(),
        potential_energy: potential_energy(alpha),
        support_radius: alpha.support_radius(),
        sinkhorn_iterations: sol.iterations(),
    }
}

/// Moves every atom by `tau * velocity`. Coordinates whose drift row is
/// zero are copied, so they are conserved bitwise.
pub fn advance(
    alpha: &DiscreteMeasure,
    sol: &SchrodingerSolution,
    drift: &DriftMatrix,
    tau: f64,
) -> Result<DiscreteMeasure> {
    let d = alpha.dim();
    let frozen = drift.zero_rows();
    let moved = par::map_range_sized(alpha.len(), sol.mu().len() * d, |i| {
        let x = alpha.point(i);
        let vel = velocity(sol, drift, x);
        x.iter()
            .zip(&vel)
            .zip(&frozen)
            .map(|((&xr, &vr), &skip)| if skip { xr } else { xr + tau * vr })
            .collect::<Vec<f64>>()
    });
    let mut coords = Vec::with_capacity(alpha.coords().len());
    for (i, p) in moved.into_iter().enumerate() {
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteUpdate(i));
        }
        coords.extend(p);
    }
    Ok(alpha.with_coords(coords))
}

pub struct StepOutput {
    pub next: DiscreteMeasure,
    pub solution: SchrodingerSolution,
    /// Diagnostics of the measure the step started from.
    pub diagnostics: StepDiagnostics,
}

/// One explicit Euler step `alpha_{k+1} = (id + tau B[alpha_k])_# alpha_k`.
///
/// A Sinkhorn failure aborts the step.
pub fn euler_step(
    alpha: &DiscreteMeasure,
    mu0: &DiscreteMeasure,
    drift: &DriftMatrix,
    epsilon: f64,
    tau: f64,
    opts: SinkhornOptions,
    warm_u: Option<&[f64]>,
) -> Result<StepOutput> {
    let solution = sinkhorn_solve_warm(alpha, mu0, epsilon, opts, warm_u)?;
    let next = advance(alpha, &solution, drift, tau)?;
    Ok(StepOutput {
        diagnostics: diagnostics_for(alpha, &solution),
        next,
        solution,
    })
}

/// Runs the explicit Euler scheme for `N = T / tau` steps.
pub fn simulate(config: &SimulationConfig) -> Result<Trajectory> {
    let n_steps = config.steps()?;
    let alpha0 = config.alpha0.resolve()?;
    let mu0 = config.mu0.resolve()?;
    simulate_from(config, alpha0, &mu0, n_steps)
}

fn simulate_from(
    config: &SimulationConfig,
    alpha0: DiscreteMeasure,
    mu0: &DiscreteMeasure,
    n_steps: usize,
) -> Result<Trajectory> {
    let bounds = TheoryBounds::new(
        alpha0.support_radius().max(mu0.support_radius()),
        &config.drift,
        config.epsilon,
        config.horizon,
    );
    let mut traj = Trajectory {
        tau: config.tau,
        snapshot_stride: config.snapshot_stride,
        snapshots: Vec::with_capacity(n_steps / config.snapshot_stride + 1),
    };
    let mut alpha = alpha0;
    let mut warm: Option<Vec<f64>> = None;
    let mut warned = false;
    for k in 0..=n_steps {
        let radius = alpha.support_radius();
        let bound = bounds.radius_t * (1.0 + SUPPORT_SLACK);
        if radius > bound {
            return Err(Error::SupportBoundViolated {
                step: k,
                radius,
                bound: bounds.radius_t,
                partial: Box::new(traj),
            });
        }
        if radius > bounds.radius_weak * (1.0 + SUPPORT_SLACK) && !warned {
            warn!(
                "step {k}: support radius {radius} exceeds 2 R0 exp(||A|| T) = {}",
                bounds.radius_weak
            );
            warned = true;
        }

        let wrap = |e: Error| Error::StepFailed {
            step: k,
            source: Box::new(e),
        };
        let warm_u = if config.warm_start { warm.as_deref() } else { None };
        let sol = sinkhorn_solve_warm(&alpha, mu0, config.epsilon, config.sinkhorn, warm_u)
            .map_err(wrap)?;
        if k % config.snapshot_stride == 0 {
            traj.snapshots.push(Snapshot {
                step: k,
                time: k as f64 * config.tau,
                measure: alpha.clone(),
                diagnostics: diagnostics_for(&alpha, &sol),
            });
        }
        if k == n_steps {
            break;
        }
        alpha = advance(&alpha, &sol, &config.drift, config.tau).map_err(wrap)?;
        warm = Some(sol.u().to_vec());
    }
    Ok(traj)
}

/// Theory bounds for a configuration, using the resolved initial measures.
pub fn theory_bounds(config: &SimulationConfig) -> Result<TheoryBounds> {
    let a = config.alpha0.resolve()?;
    let m = config.mu0.resolve()?;
    Ok(TheoryBounds::new(
        a.support_radius().max(m.support_radius()),
        &config.drift,
        config.epsilon,
        config.horizon,
    ))
}

/// Same as [`simulate`] but starting from an explicit initial measure.
pub fn simulate_with_initial(config: &SimulationConfig, alpha0: DiscreteMeasure) -> Result<Trajectory> {
    let n_steps = config.steps()?;
    let mu0 = config.mu0.resolve()?;
    simulate_from(config, alpha0, &mu0, n_steps)
}
