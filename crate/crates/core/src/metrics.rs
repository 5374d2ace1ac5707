//! Constraint-violation metrics over trajectories.
//!
//! All cumulative quantities clip the *sum* of congestion vectors, never the
//! individual steps, and accumulate with compensated summation.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::game::ResourceConstraints;
use crate::numeric::{positive_part_norm, CompensatedSum};
use crate::pricing::Schedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Anccvc,
    WeightedCcv,
    ErgodicViolation,
    PerResourceCongestion,
}

/// `(t, value)` points of one metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub kind: MetricKind,
    pub points: Vec<(usize, f64)>,
}

impl MetricSeries {
    /// ANCCVC at every prefix length `t = 1..=T`.
    pub fn anccvc(traj: &Trajectory) -> Self {
        let points = anccvc_series(traj)
            .into_iter()
            .enumerate()
            .map(|(k, v)| (k + 1, v))
            .collect();
        Self {
            kind: MetricKind::Anccvc,
            points,
        }
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }
}

fn check_prefix(traj: &Trajectory, t: usize) -> Result<()> {
    if t == 0 || t > traj.len() {
        return Err(Error::OutOfRange {
            index: t,
            len: traj.len(),
        });
    }
    Ok(())
}

/// Component-wise compensated `Σ_{τ<t} w_τ φ_τ`.
fn weighted_congestion_sum(traj: &Trajectory, t: usize, weight: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut acc = vec![CompensatedSum::new(); traj.n_resources()];
    for (tau, phi) in traj.congestions().take(t).enumerate() {
        let w = weight(tau);
        for (a, &p) in acc.iter_mut().zip(phi.iter()) {
            a.add(w * p);
        }
    }
    acc.iter().map(CompensatedSum::value).collect()
}

/// `‖[Σ_{τ<t} (A X_τ - b)]₊‖₂ / t`.
pub fn anccvc(traj: &Trajectory, t: usize) -> Result<f64> {
    check_prefix(traj, t)?;
    let sum = weighted_congestion_sum(traj, t, |_| 1.0);
    Ok(positive_part_norm(sum) / t as f64)
}

/// ANCCVC for every `t = 1..=T` in one pass.
pub fn anccvc_series(traj: &Trajectory) -> Vec<f64> {
    let mut acc = vec![CompensatedSum::new(); traj.n_resources()];
    traj.congestions()
        .enumerate()
        .map(|(tau, phi)| {
            for (a, &p) in acc.iter_mut().zip(phi.iter()) {
                a.add(p);
            }
            positive_part_norm(acc.iter().map(CompensatedSum::value)) / (tau + 1) as f64
        })
        .collect()
}

/// `‖[Σ_{τ<t} γ_τ (A X_τ - b)]₊‖₂²`, the quantity the expected-violation bound
/// controls.
pub fn weighted_ccv(traj: &Trajectory, t: usize, gamma: &Schedule) -> Result<f64> {
    check_prefix(traj, t)?;
    let sum = weighted_congestion_sum(traj, t, |tau| gamma.at_step(tau));
    Ok(positive_part_norm(sum).powi(2))
}

/// Time-averaged congestion `Σ_{τ<t} φ_τ / t` per resource.
pub fn average_congestion(traj: &Trajectory, t: usize) -> Result<DVector<f64>> {
    check_prefix(traj, t)?;
    let sum = weighted_congestion_sum(traj, t, |_| 1.0);
    Ok(DVector::from_vec(sum) / t as f64)
}

/// `x̄_t = Σ_{τ<t} γ_τ X_τ / Σ_{τ<t} γ_τ`.
pub fn ergodic_average(traj: &Trajectory, t: usize, gamma: &Schedule) -> Result<DVector<f64>> {
    check_prefix(traj, t)?;
    let dim = traj.records[0].action.len();
    let mut acc = vec![CompensatedSum::new(); dim];
    let mut total = CompensatedSum::new();
    for (tau, x) in traj.actions().take(t).enumerate() {
        let w = gamma.at_step(tau);
        total.add(w);
        for (a, &v) in acc.iter_mut().zip(x.iter()) {
            a.add(w * v);
        }
    }
    let total = total.value();
    if total <= 0.0 {
        return Err(Error::param("gamma", "ergodic weights sum to zero"));
    }
    Ok(DVector::from_iterator(dim, acc.iter().map(|a| a.value() / total)))
}

/// `‖[A x̄_t - b]₊‖₂` for the ergodic average.
pub fn ergodic_violation(
    traj: &Trajectory,
    t: usize,
    gamma: &Schedule,
    rc: &ResourceConstraints,
) -> Result<f64> {
    let avg = ergodic_average(traj, t, gamma)?;
    Ok(positive_part_norm(rc.congestion(&avg)?.iter().copied()))
}

/// Least-squares slope of `ln(value)` against `ln(horizon)`.
pub fn decay_fit(horizons: &[f64], values: &[f64]) -> Result<f64> {
    if horizons.len() != values.len() {
        return Err(Error::DimensionMismatch {
            context: "decay fit",
            expected: horizons.len(),
            got: values.len(),
        });
    }
    if horizons.len() < 3 {
        return Err(Error::param("horizons", "need at least three horizons"));
    }
    if let Some(v) = values.iter().chain(horizons).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::param("values", format!("log fit needs positive values, got {v}")));
    }
    let xs: Vec<f64> = horizons.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("horizons", "need at least two distinct horizons"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}
