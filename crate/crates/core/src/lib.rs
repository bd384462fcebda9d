//! Particle solver for the entropic semi-geostrophic equations.
//!
//! Discrete probability measures are advanced by the explicit Euler scheme
//! `alpha_{k+1} = (id + tau A (id - bary_k))_# alpha_k`, where `bary_k` is the
//! barycentric projection of the entropic optimal plan from `alpha_k` to a
//! fixed reference measure. The crate also ships an exact network-simplex
//! OT oracle and the convergence studies built on top of it.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
pub mod entropic_ot;
pub mod error;
pub mod exact_ot;
pub mod io;
pub mod measures;
pub mod par;

pub use dynamics::{
    euler_step, make_j, simulate, velocity, DriftMatrix, MeasureSource, SimulationConfig,
    TheoryBounds, Trajectory,
};
pub use entropic_ot::{sinkhorn_solve, SchrodingerSolution, SinkhornOptions};
pub use error::{Error, Result};
pub use exact_ot::{w2, w2_squared_exact, Coupling};
pub use measures::{quantize_uniform_ball, BallSpec, DiscreteMeasure};

/// Version string recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
