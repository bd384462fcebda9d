//! Convergence and conservation studies built on the solvers.
//!
//! Distances between trajectories are sup-over-common-times of exact `W_2`.
//! Independent runs inside a study execute concurrently; reports are
//! assembled in grid order, so their contents do not depend on scheduling.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dynamics::{simulate, simulate_with_initial, MeasureSource, SimulationConfig, Trajectory};
use crate::entropic_ot::{sinkhorn_solve, SinkhornOptions};
use crate::error::{Error, Result};
use crate::exact_ot::{w2, w2_squared_exact};
use crate::measures::DiscreteMeasure;
use crate::par;

/// Smallest grid accepted by [`fit_rate`].
pub const MIN_GRID_POINTS: usize = 4;
/// Two snapshot times are the same if they differ by less than this.
pub const TIME_MATCH_TOL: f64 = 1e-9;

/// Log-log least-squares fit `log e = slope * log h + c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub grid: Vec<f64>,
    pub errors: Vec<f64>,
    /// `None` when fewer than two errors are positive.
    pub slope: Option<f64>,
    /// 95% half-width from the residual standard error; needs three points.
    pub half_width: Option<f64>,
    /// Every error is exactly zero.
    pub degenerate_zero: bool,
}

fn check_decreasing(grid: &[f64], what: &str) -> Result<()> {
    if grid.len() < MIN_GRID_POINTS {
        return Err(Error::InvalidArgument(format!(
            "{what} needs at least {MIN_GRID_POINTS} points, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} must be positive")));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(format!("{what} must be strictly decreasing")));
    }
    Ok(())
}

/// Fits the observed order of `errors` against `grid`. Zero errors are left
/// out of the regression.
pub fn fit_rate(grid: &[f64], errors: &[f64]) -> Result<RateFit> {
    check_decreasing(grid, "rate grid")?;
    if errors.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} errors for {} grid points",
            errors.len(),
            grid.len()
        )));
    }
    if errors.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument("errors must be finite and >= 0".into()));
    }
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    let mut fit = RateFit {
        grid: grid.to_vec(),
        errors: errors.to_vec(),
        slope: None,
        half_width: None,
        degenerate_zero: pts.is_empty(),
    };
    if pts.len() < 2 {
        return Ok(fit);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    fit.slope = Some(slope);
    if pts.len() > 2 {
        let intercept = my - slope * mx;
        let rss: f64 = pts
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        let df = n - 2.0;
        let se = (rss / df / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .inverse_cdf(0.975);
        fit.half_width = Some(t * se);
    }
    Ok(fit)
}

/// Index pairs of snapshots taken at the same time in both trajectories.
pub fn common_times(a: &Trajectory, b: &Trajectory) -> Vec<(usize, usize)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.snapshots.len() && j < b.snapshots.len() {
        let (ta, tb) = (a.snapshots[i].time, b.snapshots[j].time);
        if (ta - tb).abs() <= TIME_MATCH_TOL * (1.0 + ta.abs()) {
            out.push((i, j));
            i += 1;
            j += 1;
        } else if ta < tb {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// `sup_t W_2(a_t, b_t)` over the common snapshot times.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let pairs = common_times(a, b);
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("trajectories share no snapshot time".into()));
    }
    let d = par::map_slice(&pairs, |&(i, j)| w2(&a.snapshots[i].measure, &b.snapshots[j].measure))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    Ok(par::max_of(&d))
}

/// Debiased entropic surrogate `sqrt(2 max(S_eps, 0))` for `W_2`, where
/// `S_eps(a, b) = OT_eps(a, b) - (OT_eps(a, a) + OT_eps(b, b)) / 2`.
pub fn sinkhorn_divergence_distance(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    epsilon: f64,
    opts: SinkhornOptions,
) -> Result<f64> {
    let ab = sinkhorn_solve(a, b, epsilon, opts)?.ot_eps_value();
    let aa = sinkhorn_solve(a, a, epsilon, opts)?.ot_eps_value();
    let bb = sinkhorn_solve(b, b, epsilon, opts)?.ot_eps_value();
    Ok((2.0 * (ab - 0.5 * (aa + bb))).max(0.0).sqrt())
}

fn with_tau(base: &SimulationConfig, tau: f64) -> SimulationConfig {
    SimulationConfig {
        tau,
        snapshot_stride: 1,
        ..base.clone()
    }
}

/// Self-convergence in `tau`: every run is compared with the run at the
/// last (finest) grid entry, which is itself left out of the fit.
pub fn tau_rate_study(base: &SimulationConfig, tau_grid: &[f64]) -> Result<RateFit> {
    let Some((_, coarse)) = tau_grid.split_last() else {
        return Err(Error::InvalidArgument("empty tau grid".into()));
    };
    check_decreasing(coarse, "tau grid without its reference entry")?;
    check_decreasing(tau_grid, "tau grid")?;
    let runs = par::map_slice(tau_grid, |&tau| simulate(&with_tau(base, tau)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let reference = runs.last().expect("non-empty grid");
    let errors = par::map_slice(&runs[..coarse.len()], |run| trajectory_distance(run, reference))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    fit_rate(coarse, &errors)
}

/// Error against a known solution `reference(t)` at every snapshot.
pub fn tau_rate_study_against<F>(base: &SimulationConfig, tau_grid: &[f64], reference: F) -> Result<RateFit>
where
    F: Fn(f64) -> Result<DiscreteMeasure> + Sync,
{
    check_decreasing(tau_grid, "tau grid")?;
    let errors = par::map_slice(tau_grid, |&tau| -> Result<f64> {
        let run = simulate(&with_tau(base, tau))?;
        let d = run
            .snapshots
            .iter()
            .map(|s| w2(&s.measure, &reference(s.time)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(par::max_of(&d))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    fit_rate(tau_grid, &errors)
}

/// Per-`eps` gaps between entropic and exact transport.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsGapReport {
    pub epsilons: Vec<f64>,
    pub w2_squared: f64,
    /// `int |x - y|^2 dgamma_eps - W_2^2`.
    pub transport_gap: Vec<f64>,
    /// `OT_eps - W_2^2 / 2`.
    pub value_gap: Vec<f64>,
    pub positive: bool,
    pub strictly_decreasing: bool,
    /// `value_gap` against `eps |log eps|`, over the entries with `eps <= 1/e`
    /// (where that abscissa is positive and increasing in `eps`).
    pub fit: Option<RateFit>,
}

pub fn eps_gap_study(
    alpha: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    eps_grid: &[f64],
    opts: SinkhornOptions,
) -> Result<EpsGapReport> {
    if eps_grid.len() < 2 {
        return Err(Error::InvalidArgument("eps grid needs at least 2 points".into()));
    }
    if eps_grid.iter().any(|e| !(*e > 0.0)) || eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("eps grid must be positive and strictly decreasing".into()));
    }
    let (w2sq, _) = w2_squared_exact(alpha, mu)?;
    let sols = par::map_slice(eps_grid, |&eps| sinkhorn_solve(alpha, mu, eps, opts))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let transport_gap: Vec<f64> = sols.iter().map(|s| s.transport_cost() - w2sq).collect();
    let value_gap: Vec<f64> = sols.iter().map(|s| s.ot_eps_value() - 0.5 * w2sq).collect();

    let (abscissa, gaps): (Vec<f64>, Vec<f64>) = eps_grid
        .iter()
        .zip(&value_gap)
        .filter(|(e, _)| **e <= (-1.0f64).exp())
        .map(|(e, g)| (e * e.ln().abs(), g.max(0.0)))
        .unzip();
    let fit = if abscissa.len() >= MIN_GRID_POINTS {
        Some(fit_rate(&abscissa, &gaps)?)
    } else {
        None
    };
    Ok(EpsGapReport {
        epsilons: eps_grid.to_vec(),
        w2_squared: w2sq,
        positive: transport_gap.iter().all(|g| *g > 0.0),
        strictly_decreasing: transport_gap.windows(2).all(|w| w[1] < w[0]),
        transport_gap,
        value_gap,
        fit,
    })
}

/// Entropic total energy `E_eps = OT_eps(alpha_t, mu0) + int x_d dalpha_t`
/// along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub total: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub potential: Vec<f64>,
    /// `max_t |E_eps(t) - E_eps(0)|`.
    pub max_drift: f64,
}

/// Re-solves `OT_eps` from scratch at every snapshot.
pub fn energy_report(
    traj: &Trajectory,
    mu0: &DiscreteMeasure,
    epsilon: f64,
    opts: SinkhornOptions,
) -> Result<EnergyReport> {
    if traj.snapshots.is_empty() {
        return Err(Error::InvalidArgument("trajectory has no snapshots".into()));
    }
    let kinetic = par::map_slice(&traj.snapshots, |s| {
        sinkhorn_solve(&s.measure, mu0, epsilon, opts).map(|sol| sol.ot_eps_value())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let potential: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|s| crate::dynamics::potential_energy(&s.measure))
        .collect();
    let total: Vec<f64> = kinetic.iter().zip(&potential).map(|(k, p)| k + p).collect();
    let max_drift = total.iter().map(|e| (e - total[0]).abs()).fold(0.0, f64::max);
    Ok(EnergyReport {
        times: traj.times(),
        total,
        kinetic,
        potential,
        max_drift,
    })
}

/// One row of a joint refinement schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub epsilon: f64,
    pub tau: f64,
    /// Atoms in both quantized initial measures.
    pub count: usize,
    /// Seed for `alpha0`; `mu0` uses `seed + 1`.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointReport {
    pub schedule: Vec<ScheduleRow>,
    /// `d_i = sup_t W_2(traj_i, traj_{i+1})`.
    pub distances: Vec<f64>,
    pub strictly_decreasing: bool,
    /// Some distance exceeded the exact-OT size guard and was replaced by
    /// the debiased entropic surrogate at the smallest scheduled `eps`.
    pub approximate: bool,
}

fn ball_radius(src: &MeasureSource, which: &str) -> Result<f64> {
    match src {
        MeasureSource::Ball { spec, .. } => Ok(spec.radius),
        _ => Err(Error::InvalidArgument(format!(
            "{which} must be a ball specification for a joint study"
        ))),
    }
}

/// Runs the scheduled refinements of `(eps, tau, quantization)` and reports
/// distances between successive trajectories.
pub fn joint_convergence_study(base: &SimulationConfig, schedule: &[ScheduleRow]) -> Result<JointReport> {
    if schedule.len() < 2 {
        return Err(Error::InvalidArgument("schedule needs at least 2 rows".into()));
    }
    let ra = ball_radius(&base.alpha0, "alpha0")?;
    let rm = ball_radius(&base.mu0, "mu0")?;
    let dim = base.dim;
    let configs = schedule
        .iter()
        .map(|row| -> Result<SimulationConfig> {
            let ball = |radius, seed| -> Result<MeasureSource> {
                Ok(MeasureSource::Ball {
                    spec: crate::measures::BallSpec::new(radius, dim)?,
                    count: row.count,
                    seed,
                })
            };
            let cfg = SimulationConfig {
                epsilon: row.epsilon,
                tau: row.tau,
                snapshot_stride: 1,
                alpha0: ball(ra, row.seed)?,
                mu0: ball(rm, row.seed.wrapping_add(1))?,
                ..base.clone()
            };
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let runs = par::map_slice(&configs, simulate)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let eps_min = schedule.iter().map(|r| r.epsilon).fold(f64::INFINITY, f64::min);
    let opts = base.sinkhorn;
    let pairs: Vec<(usize, usize)> = (0..runs.len() - 1).map(|i| (i, i + 1)).collect();
    let results = par::map_slice(&pairs, |&(i, j)| -> Result<(f64, bool)> {
        match trajectory_distance(&runs[i], &runs[j]) {
            Ok(d) => Ok((d, false)),
            Err(Error::InstanceTooLarge { .. }) => {
                let common = common_times(&runs[i], &runs[j]);
                let d = common
                    .iter()
                    .map(|&(a, b)| {
                        sinkhorn_divergence_distance(
                            &runs[i].snapshots[a].measure,
                            &runs[j].snapshots[b].measure,
                            eps_min,
                            opts,
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((par::max_of(&d), true))
            }
            Err(e) => Err(e),
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let distances: Vec<f64> = results.iter().map(|r| r.0).collect();
    Ok(JointReport {
        schedule: schedule.to_vec(),
        strictly_decreasing: distances.windows(2).all(|w| w[1] < w[0]),
        approximate: results.iter().any(|r| r.1),
        distances,
    })
}

/// `max_x |grad v[alpha1](x) - grad v[alpha2](x)| / W_2(alpha1, alpha2)` over
/// the probe points, with both potentials taken against the same `mu`.
pub fn potential_stability_ratio(
    alpha1: &DiscreteMeasure,
    alpha2: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    epsilon: f64,
    probes: &[Vec<f64>],
    opts: SinkhornOptions,
) -> Result<f64> {
    let d = w2(alpha1, alpha2)?;
    if d == 0.0 {
        return Err(Error::InvalidArgument("alpha1 and alpha2 coincide".into()));
    }
    let s1 = sinkhorn_solve(alpha1, mu, epsilon, opts)?;
    let s2 = sinkhorn_solve(alpha2, mu, epsilon, opts)?;
    let diffs: Vec<f64> = probes
        .iter()
        .map(|x| crate::measures::norm(
            &s1.grad_v(x).iter().zip(s2.grad_v(x)).map(|(a, b)| a - b).collect::<Vec<_>>(),
        ))
        .collect();
    Ok(par::max_of(&diffs) / d)
}

/// `sup_t W_2(alpha_t, alpha'_t) / W_2(alpha_0, alpha'_0)` for two runs of the
/// same configuration from different initial measures.
pub fn initial_data_stability(
    config: &SimulationConfig,
    alpha0: &DiscreteMeasure,
    perturbed: &DiscreteMeasure,
) -> Result<f64> {
    let d0 = w2(alpha0, perturbed)?;
    if d0 == 0.0 {
        return Err(Error::InvalidArgument("initial measures coincide".into()));
    }
    let a = simulate_with_initial(config, alpha0.clone())?;
    let b = simulate_with_initial(config, perturbed.clone())?;
    Ok(trajectory_distance(&a, &b)? / d0)
}
