//! Per-resource price controllers and the priced score update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Step-size schedule, evaluated at `t >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant { value: f64 },
    /// `scale · t^(-exponent)`.
    PowerLaw { scale: f64, exponent: f64 },
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule::Constant { value }
    }

    pub fn power_law(scale: f64, exponent: f64) -> Self {
        Schedule::PowerLaw { scale, exponent }
    }

    /// Value at time `t >= 1` (`t = 0` is treated as 1).
    pub fn eval(&self, t: usize) -> f64 {
        match *self {
            Schedule::Constant { value } => value,
            Schedule::PowerLaw { scale, exponent } => scale * (t.max(1) as f64).powf(-exponent),
        }
    }

    /// Value used at zero-based step `tau`.
    pub fn at_step(&self, tau: usize) -> f64 {
        self.eval(tau + 1)
    }

    /// `alpha · s(t)²`, e.g. progressivity tied to a learning rate.
    pub fn scaled_square(&self, alpha: f64) -> Self {
        match *self {
            Schedule::Constant { value } => Schedule::Constant {
                value: alpha * value * value,
            },
            Schedule::PowerLaw { scale, exponent } => Schedule::PowerLaw {
                scale: alpha * scale * scale,
                exponent: 2.0 * exponent,
            },
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Schedule::Constant { .. })
            || matches!(self, Schedule::PowerLaw { exponent, .. } if *exponent == 0.0)
    }
}

/// Parameter values in effect at one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    /// Agents' learning rate.
    pub gamma: f64,
    /// Resources' learning rate.
    pub zeta: f64,
    /// Price progressivity (forgetting factor).
    pub eta: f64,
    /// Price sensitivity.
    pub beta: f64,
}

impl StepParams {
    pub fn validate(&self) -> Result<()> {
        let StepParams {
            gamma,
            zeta,
            eta,
            beta,
        } = *self;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param("gamma", format!("must be positive, got {gamma}")));
        }
        check_price_params(eta, zeta, beta)
    }
}

fn check_price_params(eta: f64, zeta: f64, beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::param("eta", format!("must lie in [0, 1], got {eta}")));
    }
    if !(zeta >= 0.0 && zeta.is_finite()) {
        return Err(Error::param("zeta", format!("must be non-negative, got {zeta}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::param("beta", format!("must be non-negative, got {beta}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSet {
    pub gamma: Schedule,
    pub zeta: Schedule,
    pub eta: Schedule,
    pub beta: Schedule,
}

impl ScheduleSet {
    pub fn at_step(&self, tau: usize) -> StepParams {
        StepParams {
            gamma: self.gamma.at_step(tau),
            zeta: self.zeta.at_step(tau),
            eta: self.eta.at_step(tau),
            beta: self.beta.at_step(tau),
        }
    }

    /// Checks the range constraints at every step `tau < horizon`.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        // Power laws are monotone in t, so the endpoints bound every step.
        let last = horizon.saturating_sub(1);
        for tau in [0, last] {
            self.at_step(tau).validate()?;
        }
        Ok(())
    }
}

/// Internal prices `Λ ≥ 0` and the effective prices `Λ̃ = β Λ` agents see.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceState {
    pub prices: DVector<f64>,
    pub effective: DVector<f64>,
}

impl PriceState {
    pub fn zeros(n_resources: usize) -> Self {
        Self {
            prices: DVector::zeros(n_resources),
            effective: DVector::zeros(n_resources),
        }
    }

    pub fn new(prices: DVector<f64>, beta: f64) -> Result<Self> {
        if prices.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::param("prices", "initial prices must be finite and >= 0"));
        }
        let effective = &prices * beta;
        Ok(Self { prices, effective })
    }

    pub fn n_resources(&self) -> usize {
        self.prices.len()
    }

    /// `Λ' = [(1-η)Λ + ζφ]₊` per resource, `Λ̃' = β Λ'`.
    pub fn update(&self, phi: &DVector<f64>, eta: f64, zeta: f64, beta: f64) -> Result<Self> {
        check_dim("price update", self.n_resources(), phi.len())?;
        check_price_params(eta, zeta, beta)?;
        let prices = self
            .prices
            .zip_map(phi, |lambda, c| ((1.0 - eta) * lambda + zeta * c).max(0.0));
        let effective = &prices * beta;
        Ok(Self { prices, effective })
    }
}

pub fn update_price(
    state: &PriceState,
    phi: &DVector<f64>,
    eta: f64,
    zeta: f64,
    beta: f64,
) -> Result<PriceState> {
    state.update(phi, eta, zeta, beta)
}

/// `Y' = Y + γ (v̂ - Aᵀ Λ̃)`: prices enter as a linear cost on resource use.
pub fn score_update(
    y: &DVector<f64>,
    v_hat: &DVector<f64>,
    effective_prices: &DVector<f64>,
    a: &DMatrix<f64>,
    gamma: f64,
) -> Result<DVector<f64>> {
    check_dim("score update gradient", y.len(), v_hat.len())?;
    check_dim("score update resource columns", y.len(), a.ncols())?;
    check_dim("score update prices", a.nrows(), effective_prices.len())?;
    let mut drift = v_hat.clone();
    drift.gemv_tr(-1.0, a, effective_prices, 1.0);
    Ok(y + drift * gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn feasible_start_keeps_zero_price() {
        let s = PriceState::zeros(1).update(&v(&[-1.0]), 0.0, 0.1, 1.0).unwrap();
        assert_eq!(s.prices[0], 0.0);
    }

    #[test]
    fn direct_formula() {
        let s = PriceState::new(v(&[1.0]), 2.0)
            .unwrap()
            .update(&v(&[2.0]), 0.1, 0.5, 2.0)
            .unwrap();
        assert!((s.prices[0] - 1.9).abs() < 1e-15);
        assert!((s.effective[0] - 3.8).abs() < 1e-15);
    }

    #[test]
    fn clipping_branch() {
        let s = PriceState::new(v(&[0.5]), 1.0)
            .unwrap()
            .update(&v(&[-1.0]), 0.0, 1.0, 1.0)
            .unwrap();
        assert_eq!(s.prices[0], 0.0);
    }

    #[test]
    fn negative_parameters_are_rejected() {
        let s = PriceState::zeros(1);
        let phi = v(&[1.0]);
        assert!(s.update(&phi, -0.1, 0.1, 1.0).is_err());
        assert!(s.update(&phi, 0.1, -0.1, 1.0).is_err());
        assert!(s.update(&phi, 0.1, 0.1, -1.0).is_err());
        assert!(s.update(&phi, 1.5, 0.1, 1.0).is_err());
        assert!(s.update(&v(&[1.0, 2.0]), 0.1, 0.1, 1.0).is_err());
    }

    #[test]
    fn zero_prices_reduce_to_plain_mirror_ascent() {
        let y = v(&[1.0, 2.0]);
        let g = v(&[0.5, -0.5]);
        let out = score_update(&y, &g, &v(&[0.0]), &DMatrix::from_element(1, 2, 3.0), 0.1).unwrap();
        assert_eq!(out, &y + &g * 0.1);
    }

    #[test]
    fn pure_price_push() {
        let y = v(&[1.0, 1.0, 1.0]);
        let out = score_update(
            &y,
            &DVector::zeros(3),
            &DVector::from_element(3, 1.0),
            &DMatrix::identity(3, 3),
            0.5,
        )
        .unwrap();
        assert_eq!(out.as_slice(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn kronecker_resource_matrix_charges_every_block_alike() {
        let game = crate::quad::make_quadratic_game(20, 5, 1).unwrap();
        let a = &game.resources().a;
        let prices = v(&[0.1, 0.2, 0.3, 0.4, 0.5]);
        let charge = a.transpose() * &prices;
        for i in 0..20 {
            for r in 0..5 {
                assert!((charge[i * 5 + r] - 4.0 * prices[r]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scaled_square_of_power_law() {
        let g = Schedule::power_law(0.5, 0.5);
        let eta = g.scaled_square(10.0);
        for t in 1..50 {
            let expect = 10.0 * g.eval(t).powi(2);
            assert!((eta.eval(t) - expect).abs() <= 1e-15 * expect.max(1.0));
        }
    }

    proptest! {
        #[test]
        fn prices_stay_nonnegative(phis in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 1..40),
                                   eta in 0.0f64..=1.0, zeta in 0.0f64..2.0) {
            let mut s = PriceState::zeros(3);
            for phi in phis {
                s = s.update(&DVector::from_vec(phi), eta, zeta, 2.0).unwrap();
                prop_assert!(s.prices.iter().all(|&p| p >= 0.0));
                prop_assert_eq!(&s.effective, &(&s.prices * 2.0));
            }
        }

        #[test]
        fn resources_update_independently(prices in prop::collection::vec(0.0f64..10.0, 4),
                                         phi in prop::collection::vec(-10.0f64..10.0, 4),
                                         eta in 0.0f64..=1.0, zeta in 0.0f64..1.0) {
            let s = PriceState::new(DVector::from_vec(prices.clone()), 1.0).unwrap();
            let out = s.update(&DVector::from_vec(phi.clone()), eta, zeta, 1.0).unwrap();
            let perm = [2usize, 0, 3, 1];
            let sp = PriceState::new(DVector::from_iterator(4, perm.iter().map(|&k| prices[k])), 1.0).unwrap();
            let outp = sp.update(&DVector::from_iterator(4, perm.iter().map(|&k| phi[k])), eta, zeta, 1.0).unwrap();
            for (j, &k) in perm.iter().enumerate() {
                prop_assert_eq!(outp.prices[j], out.prices[k]);
            }
        }

        #[test]
        fn zero_congestion_contracts_prices(prices in prop::collection::vec(0.0f64..10.0, 3), eta in 0.001f64..=1.0) {
            let s = PriceState::new(DVector::from_vec(prices.clone()), 1.0).unwrap();
            let out = s.update(&DVector::zeros(3), eta, 0.3, 1.0).unwrap();
            for (p, q) in prices.iter().zip(out.prices.iter()) {
                prop_assert!((q - (1.0 - eta) * p).abs() <= 1e-15 * p.max(1.0));
            }
        }

        #[test]
        fn effective_price_is_linear_in_beta(prices in prop::collection::vec(0.0f64..10.0, 3), beta in 0.0f64..8.0) {
            let base = PriceState::new(DVector::from_vec(prices.clone()), 1.0).unwrap();
            let phi = DVector::from_element(3, 0.5);
            let a = base.update(&phi, 0.1, 0.2, 1.0).unwrap();
            let b = base.update(&phi, 0.1, 0.2, beta).unwrap();
            prop_assert_eq!(&a.prices, &b.prices);
            prop_assert!((&a.prices * beta - &b.effective).amax() <= 1e-12);
        }
    }
}
