//! The priced online mirror ascent loop.
//!
//! Each step plays `X_t = Φ(Y_t)`, queries `v̂_t = v(X_t) + ξ`, moves scores
//! with the current effective prices `Λ̃_t`, and only then lets every
//! resource update its price from its own congestion `φ_t = A X_t - b`.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::game::{noisy_gradient, GameSpec};
use crate::mirror::{total_fenchel, total_mirror, Regularizer};
use crate::pricing::{score_update, PriceState, ScheduleSet, StepParams};

/// Optional per-step fields kept in a [`Trajectory`]. Actions, prices and
/// congestion are always kept.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordOptions {
    pub scores: bool,
    pub noise: bool,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub game: Arc<GameSpec>,
    pub regularizers: Vec<Regularizer>,
    pub schedules: ScheduleSet,
    pub horizon: usize,
    pub seed: u64,
    /// `Y_0`, zero when absent.
    pub initial_scores: Option<DVector<f64>>,
    /// `Λ_0`, zero when absent.
    pub initial_prices: Option<DVector<f64>>,
    pub record: RecordOptions,
}

impl SimConfig {
    /// Config with the canonical regularizer of every action set and zero
    /// initial scores and prices.
    pub fn new(game: Arc<GameSpec>, schedules: ScheduleSet, horizon: usize, seed: u64) -> Self {
        let regularizers = game
            .action_sets()
            .iter()
            .map(Regularizer::for_action_set)
            .collect();
        Self {
            game,
            regularizers,
            schedules,
            horizon,
            seed,
            initial_scores: None,
            initial_prices: None,
            record: RecordOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        check_dim("regularizers", self.game.n_players(), self.regularizers.len())?;
        for (reg, set) in self.regularizers.iter().zip(self.game.action_sets()) {
            if reg.action_set() != *set {
                return Err(Error::InvalidGame(
                    "regularizer does not live on the player's action set".into(),
                ));
            }
        }
        if let Some(y) = &self.initial_scores {
            check_dim("initial scores", self.game.total_dim(), y.len())?;
        }
        if let Some(l) = &self.initial_prices {
            check_dim("initial prices", self.game.n_resources(), l.len())?;
        }
        self.schedules.validate(self.horizon)
    }
}

/// `(Y_t, Λ_t, Λ̃_t, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub scores: DVector<f64>,
    pub prices: PriceState,
    pub t: usize,
}

impl SimState {
    pub fn initial(cfg: &SimConfig) -> Result<Self> {
        let game = &cfg.game;
        let scores = cfg
            .initial_scores
            .clone()
            .unwrap_or_else(|| DVector::zeros(game.total_dim()));
        let lambda = cfg
            .initial_prices
            .clone()
            .unwrap_or_else(|| DVector::zeros(game.n_resources()));
        let prices = PriceState::new(lambda, cfg.schedules.at_step(0).beta)?;
        Ok(Self {
            scores,
            prices,
            t: 0,
        })
    }
}

/// What happened at step `t`: the action played, the prices in effect while
/// it was played, and the resulting congestion.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub action: DVector<f64>,
    pub prices: DVector<f64>,
    pub effective_prices: DVector<f64>,
    pub congestion: DVector<f64>,
    pub params: StepParams,
    pub noise: Option<DVector<f64>>,
    pub scores: Option<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub final_state: SimState,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_resources(&self) -> usize {
        self.final_state.prices.n_resources()
    }

    pub fn congestions(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.records.iter().map(|r| &r.congestion)
    }

    pub fn actions(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.records.iter().map(|r| &r.action)
    }
}

/// One iteration of the mechanism. Returns the successor state and the
/// record of the step just played.
pub fn step<R: Rng + ?Sized>(
    state: &SimState,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(SimState, StepRecord)> {
    if state.t >= cfg.horizon {
        return Err(Error::OutOfRange {
            index: state.t,
            len: cfg.horizon,
        });
    }
    let game = &cfg.game;
    let params = cfg.schedules.at_step(state.t);
    params.validate()?;

    let action = total_mirror(&state.scores, &cfg.regularizers)?;
    let feedback = noisy_gradient(&action, game, &game.noise(), rng)?;
    let scores = score_update(
        &state.scores,
        &feedback.value,
        &state.prices.effective,
        &game.resources().a,
        params.gamma,
    )?;
    let congestion = game.congestion(&action)?;
    let prices = state
        .prices
        .update(&congestion, params.eta, params.zeta, params.beta)?;

    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState {
            step: state.t,
            what: "scores",
        });
    }
    if prices.prices.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState {
            step: state.t,
            what: "prices",
        });
    }

    let record = StepRecord {
        t: state.t,
        action,
        prices: state.prices.prices.clone(),
        effective_prices: state.prices.effective.clone(),
        congestion,
        params,
        noise: if cfg.record.noise { feedback.noise } else { None },
        scores: cfg.record.scores.then(|| state.scores.clone()),
    };
    let next = SimState {
        scores,
        prices,
        t: state.t + 1,
    };
    Ok((next, record))
}

/// Runs the mechanism for `cfg.horizon` steps from a ChaCha8 stream seeded
/// with `cfg.seed`.
pub fn run(cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = SimState::initial(cfg)?;
    let mut records = Vec::with_capacity(cfg.horizon);
    while state.t < cfg.horizon {
        let (next, record) = step(&state, cfg, &mut rng)?;
        records.push(record);
        state = next;
    }
    Ok(Trajectory {
        records,
        final_state: state,
        seed: cfg.seed,
    })
}

/// `ℰ¹_t = F(x*, Y_t) + ½‖Λ_t - λ*‖²` for `t = 0..=T`. Needs recorded scores.
pub fn energy_diagnostic(
    traj: &Trajectory,
    x_star: &DVector<f64>,
    lambda_star: &DVector<f64>,
    regs: &[Regularizer],
) -> Result<Vec<f64>> {
    check_dim("energy reference prices", traj.n_resources(), lambda_star.len())?;
    if lambda_star.iter().any(|&l| l < 0.0) {
        return Err(Error::param("lambda_star", "must be non-negative"));
    }
    let energy = |y: &DVector<f64>, lambda: &DVector<f64>| -> Result<f64> {
        Ok(total_fenchel(x_star, y, regs)? + 0.5 * (lambda - lambda_star).norm_squared())
    };
    let mut out = Vec::with_capacity(traj.len() + 1);
    for r in &traj.records {
        let y = r.scores.as_ref().ok_or_else(|| {
            Error::Unsupported("energy diagnostic needs recorded scores".into())
        })?;
        out.push(energy(y, &r.prices)?);
    }
    let last = &traj.final_state;
    out.push(energy(&last.scores, &last.prices.prices)?);
    Ok(out)
}

/// Running noise terms `S_t(x) = Σ γ_τ ⟨X_τ - x, ξ_τ⟩` and
/// `R_t = Σ γ_τ² ‖ξ_τ‖²_*`, for `t = 1..=T`. Needs recorded noise.
pub fn noise_accumulators(
    traj: &Trajectory,
    reference: &DVector<f64>,
    game: &GameSpec,
) -> Result<Vec<(f64, f64)>> {
    let mut s = 0.0;
    let mut r = 0.0;
    let mut out = Vec::with_capacity(traj.len());
    for rec in &traj.records {
        let xi = rec.noise.as_ref().ok_or_else(|| {
            Error::Unsupported("noise accumulators need recorded noise".into())
        })?;
        let g = rec.params.gamma;
        s += g * (&rec.action - reference).dot(xi);
        r += g * g * game.dual_norm(xi.as_slice()).powi(2);
        out.push((s, r));
    }
    Ok(out)
}
