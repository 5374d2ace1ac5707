//! Resource-congestion pricing for populations of competing online mirror
//! descent agents.
//!
//! Agents play a continuous game on product action sets and update score
//! vectors with noisy utility gradients. Every resource runs its own price
//! controller driven by its congestion `A x - b`, and agents feel the
//! resulting effective prices as a linear cost. The crate provides
//!
//! * the game model and noisy first-order oracle ([`game`]),
//! * regularizers, mirror maps and the Fenchel coupling ([`mirror`]),
//! * the price controller and priced score update ([`pricing`]),
//! * the simulation loop ([`engine`]),
//! * constraint-violation metrics ([`metrics`]),
//! * game constants, the trackability condition, the expected-violation
//!   bound and a constrained variational-inequality solver ([`theory`]),
//! * the quadratic allocation benchmark game ([`quad`]),
//! * a reproducible sweep harness that writes CSV/JSON reports
//!   ([`experiment`]).

pub mod engine;
pub mod error;
pub mod experiment;
pub mod game;
pub mod metrics;
pub mod mirror;
pub mod pricing;
pub mod quad;
pub mod theory;

mod numeric;

pub use engine::{run, step, RecordOptions, SimConfig, SimState, StepRecord, Trajectory};
pub use error::{Error, Result};
pub use game::{ActionSet, GameSpec, GradientOracle, NoiseKind, NoiseModel, ResourceConstraints};
pub use metrics::{anccvc, decay_fit, ergodic_average, weighted_ccv, MetricKind, MetricSeries};
pub use mirror::{fenchel_coupling, mirror_map, total_mirror, Regularizer, RegularizerKind};
pub use pricing::{score_update, PriceState, Schedule, ScheduleSet, StepParams};
pub use quad::{make_quadratic_game, quad_cost, quad_gradient, QuadGameParams};
pub use theory::{
    compute_constants, eta_interval, kkt_residual, solve_constrained_vi, theorem1_bound,
    trackability_check, GameConstants, KktResidual, VISolution,
};
