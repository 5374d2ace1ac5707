//! Regularizers, their mirror maps and the Fenchel coupling.
//!
//! A regularizer `ψ` is `K`-strongly convex on a player's action set. Its
//! mirror map is `Φ(y) = argmax_x {⟨y, x⟩ - ψ(x)}` and its Fenchel coupling
//! `F(p, y) = ψ(p) + ψ*(y) - ⟨y, p⟩` with `ψ*(y) = ⟨y, Φ(y)⟩ - ψ(Φ(y))`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::game::{ActionSet, NormKind};

/// Membership tolerance for the base point of a Fenchel coupling.
pub const COUPLING_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerKind {
    /// `K Σ x_k ln x_k` on the simplex; the mirror map is the logit choice.
    EntropyOnSimplex,
    /// `(K/2)‖x‖²` on a box; the mirror map is clamping.
    SquaredEuclideanOnBox { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    /// Strong convexity modulus `K` (ℓ1 for entropy, ℓ2 for the box).
    pub strength: f64,
    pub dim: usize,
}

impl Regularizer {
    pub fn entropy(dim: usize) -> Self {
        Self {
            kind: RegularizerKind::EntropyOnSimplex,
            strength: 1.0,
            dim,
        }
    }

    pub fn squared_euclidean(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let dim = lower.len();
        Self {
            kind: RegularizerKind::SquaredEuclideanOnBox { lower, upper },
            strength: 1.0,
            dim,
        }
    }

    /// The canonical regularizer of an action set.
    pub fn for_action_set(set: &ActionSet) -> Self {
        match set {
            ActionSet::Simplex { dim } => Self::entropy(*dim),
            ActionSet::Hyperbox { lower, upper } => {
                Self::squared_euclidean(lower.clone(), upper.clone())
            }
        }
    }

    pub fn with_strength(mut self, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::param("strength", format!("must be positive, got {k}")));
        }
        self.strength = k;
        Ok(self)
    }

    pub fn action_set(&self) -> ActionSet {
        match &self.kind {
            RegularizerKind::EntropyOnSimplex => ActionSet::simplex(self.dim),
            RegularizerKind::SquaredEuclideanOnBox { lower, upper } => ActionSet::Hyperbox {
                lower: lower.clone(),
                upper: upper.clone(),
            },
        }
    }

    pub fn norm(&self) -> NormKind {
        match self.kind {
            RegularizerKind::EntropyOnSimplex => NormKind::L1,
            RegularizerKind::SquaredEuclideanOnBox { .. } => NormKind::L2,
        }
    }

    /// `ψ(x)`, with `0 ln 0 = 0`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let k = self.strength;
        match self.kind {
            RegularizerKind::EntropyOnSimplex => {
                k * x
                    .iter()
                    .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
                    .sum::<f64>()
            }
            RegularizerKind::SquaredEuclideanOnBox { .. } => {
                0.5 * k * x.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }

    /// `max ψ - min ψ` over the action set.
    pub fn range(&self) -> f64 {
        let k = self.strength;
        match &self.kind {
            RegularizerKind::EntropyOnSimplex => k * (self.dim as f64).ln(),
            RegularizerKind::SquaredEuclideanOnBox { lower, upper } => {
                let (mut hi_sum, mut lo_sum) = (0.0, 0.0);
                for (&lo, &hi) in lower.iter().zip(upper) {
                    hi_sum += (lo * lo).max(hi * hi);
                    lo_sum += if lo <= 0.0 && hi >= 0.0 {
                        0.0
                    } else {
                        (lo * lo).min(hi * hi)
                    };
                }
                0.5 * k * (hi_sum - lo_sum)
            }
        }
    }

    /// `ψ*(y)`, evaluated through the mirror map.
    pub fn conjugate(&self, y: &[f64]) -> Result<f64> {
        let x = mirror_map(y, self)?;
        Ok(dot(y, &x) - self.value(&x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Φ(y)`. The entropic case is the logit choice with a max-shift, so it is
/// finite for arbitrarily large scores.
pub fn mirror_map(y: &[f64], reg: &Regularizer) -> Result<Vec<f64>> {
    check_dim("mirror map", reg.dim, y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mirror map input"));
    }
    let k = reg.strength;
    Ok(match &reg.kind {
        RegularizerKind::EntropyOnSimplex => {
            let max = y.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut out: Vec<f64> = y.iter().map(|&v| ((v - max) / k).exp()).collect();
            let s: f64 = out.iter().sum();
            out.iter_mut().for_each(|v| *v /= s);
            out
        }
        RegularizerKind::SquaredEuclideanOnBox { lower, upper } => y
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(&v, (&lo, &hi))| (v / k).clamp(lo, hi))
            .collect(),
    })
}

/// `F(p, y) ≥ 0`. Roundoff below zero is clipped.
pub fn fenchel_coupling(p: &[f64], y: &[f64], reg: &Regularizer) -> Result<f64> {
    check_dim("fenchel coupling point", reg.dim, p.len())?;
    if !reg.action_set().contains(p, COUPLING_TOL) {
        return Err(Error::OutsideActionSet(format!("{p:?}")));
    }
    let f = reg.value(p) + reg.conjugate(y)? - dot(y, p);
    Ok(f.max(0.0))
}

/// Block-wise mirror map `Φ(y) = (Φ_1(y_1), …, Φ_N(y_N))`.
pub fn total_mirror(y: &DVector<f64>, regs: &[Regularizer]) -> Result<DVector<f64>> {
    let total: usize = regs.iter().map(|r| r.dim).sum();
    check_dim("total mirror map", total, y.len())?;
    let mut out = Vec::with_capacity(total);
    let mut offset = 0;
    for reg in regs {
        out.extend(mirror_map(&y.as_slice()[offset..offset + reg.dim], reg)?);
        offset += reg.dim;
    }
    Ok(DVector::from_vec(out))
}

/// Total coupling `Σ_i F_i(x_i, y_i)`.
pub fn total_fenchel(x: &DVector<f64>, y: &DVector<f64>, regs: &[Regularizer]) -> Result<f64> {
    let total: usize = regs.iter().map(|r| r.dim).sum();
    check_dim("total fenchel point", total, x.len())?;
    check_dim("total fenchel score", total, y.len())?;
    let mut acc = 0.0;
    let mut offset = 0;
    for reg in regs {
        let r = offset..offset + reg.dim;
        acc += fenchel_coupling(&x.as_slice()[r.clone()], &y.as_slice()[r], reg)?;
        offset += reg.dim;
    }
    Ok(acc)
}

/// Smallest strong convexity modulus over a set of regularizers.
pub fn min_strength(regs: &[Regularizer]) -> f64 {
    regs.iter().map(|r| r.strength).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn logit_of_zero_is_uniform() {
        let x = mirror_map(&[0.0; 3], &Regularizer::entropy(3)).unwrap();
        assert!(close(&x, &[1.0 / 3.0; 3], 1e-15));
    }

    #[test]
    fn logit_of_unit_score() {
        let e = std::f64::consts::E;
        let x = mirror_map(&[1.0, 0.0, 0.0], &Regularizer::entropy(3)).unwrap();
        let expect = [e / (e + 2.0), 1.0 / (e + 2.0), 1.0 / (e + 2.0)];
        assert!(close(&x, &expect, 1e-15));
        assert!(close(&x, &[0.57612, 0.21194, 0.21194], 1e-5));
    }

    #[test]
    fn logit_is_finite_for_huge_scores() {
        let reg = Regularizer::entropy(4);
        let x = mirror_map(&[1e6, -1e6, 999_999.0, 0.0], &reg).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
        assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        let reg = Regularizer::entropy(2);
        assert!(matches!(
            mirror_map(&[f64::NAN, 0.0], &reg),
            Err(Error::NonFinite(_))
        ));
        assert!(mirror_map(&[0.0], &reg).is_err());
    }

    #[test]
    fn box_mirror_map_clamps() {
        let reg = Regularizer::squared_euclidean(vec![0.0, -1.0], vec![1.0, 1.0]);
        assert_eq!(mirror_map(&[2.0, -0.5], &reg).unwrap(), vec![1.0, -0.5]);
    }

    #[test]
    fn coupling_at_vertex_against_zero_score_is_ln2() {
        let f = fenchel_coupling(&[1.0, 0.0], &[0.0, 0.0], &Regularizer::entropy(2)).unwrap();
        assert!((f - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn coupling_vanishes_at_mirror_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for reg in [
            Regularizer::entropy(4),
            Regularizer::squared_euclidean(vec![0.0; 4], vec![1.0; 4]),
        ] {
            for _ in 0..100 {
                let y: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
                let p = mirror_map(&y, &reg).unwrap();
                assert!(fenchel_coupling(&p, &y, &reg).unwrap() <= 1e-10);
            }
        }
    }

    #[test]
    fn coupling_rejects_points_off_the_simplex() {
        let reg = Regularizer::entropy(2);
        assert!(matches!(
            fenchel_coupling(&[0.7, 0.7], &[0.0, 0.0], &reg),
            Err(Error::OutsideActionSet(_))
        ));
    }

    #[test]
    fn total_mirror_concatenates_blocks() {
        let regs = vec![Regularizer::entropy(2), Regularizer::entropy(2)];
        let x = total_mirror(&DVector::zeros(4), &regs).unwrap();
        assert_eq!(x.as_slice(), &[0.5; 4]);
        let single = total_mirror(&DVector::from_vec(vec![1.0, 0.0, 0.0]), &[Regularizer::entropy(3)])
            .unwrap();
        assert_eq!(single.as_slice(), mirror_map(&[1.0, 0.0, 0.0], &Regularizer::entropy(3)).unwrap());
        assert!(total_mirror(&DVector::zeros(3), &regs).is_err());
    }

    #[test]
    fn ranges_are_closed_form() {
        assert!((Regularizer::entropy(5).range() - 5f64.ln()).abs() < 1e-15);
        let r = Regularizer::squared_euclidean(vec![-1.0, 0.5], vec![2.0, 1.0]);
        // coordinate 1: max 4, min 0; coordinate 2: max 1, min 0.25
        assert!((r.range() - 0.5 * (5.0 - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn strength_scales_the_regularizer() {
        let reg = Regularizer::entropy(3).with_strength(2.0).unwrap();
        let x = mirror_map(&[2.0, 0.0, 0.0], &reg).unwrap();
        let y = mirror_map(&[1.0, 0.0, 0.0], &Regularizer::entropy(3)).unwrap();
        assert!(close(&x, &y, 1e-15));
        assert!(Regularizer::entropy(2).with_strength(0.0).is_err());
    }

    fn scores(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, dim)
    }

    proptest! {
        #[test]
        fn logit_is_shift_invariant(y in scores(4), c in -100.0f64..100.0) {
            let reg = Regularizer::entropy(4);
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            let a = mirror_map(&y, &reg).unwrap();
            let b = mirror_map(&shifted, &reg).unwrap();
            prop_assert!(close(&a, &b, 1e-12));
        }

        #[test]
        fn total_mirror_is_blockwise_shift_invariant(y in scores(6), c1 in -50.0f64..50.0, c2 in -50.0f64..50.0) {
            let regs = vec![Regularizer::entropy(3), Regularizer::entropy(3)];
            let mut shifted = y.clone();
            shifted[..3].iter_mut().for_each(|v| *v += c1);
            shifted[3..].iter_mut().for_each(|v| *v += c2);
            let a = total_mirror(&DVector::from_vec(y), &regs).unwrap();
            let b = total_mirror(&DVector::from_vec(shifted), &regs).unwrap();
            prop_assert!((a - b).amax() <= 1e-12);
        }

        #[test]
        fn coupling_dominates_squared_distance(y in scores(3), w in prop::collection::vec(0.01f64..1.0, 3)) {
            let reg = Regularizer::entropy(3);
            let s: f64 = w.iter().sum();
            let p: Vec<f64> = w.iter().map(|v| v / s).collect();
            let f = fenchel_coupling(&p, &y, &reg).unwrap();
            let x = mirror_map(&y, &reg).unwrap();
            let d = NormKind::L1.primal(&x.iter().zip(&p).map(|(a, b)| a - b).collect::<Vec<_>>());
            prop_assert!(f >= 0.5 * reg.strength * d * d - 1e-12);
        }
    }
}
