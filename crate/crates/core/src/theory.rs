//! Checkable theory: game constants, the trackability condition, the
//! expected-violation bound, and a constrained variational-inequality
//! solver that produces the reference equilibrium and its multipliers.
//!
//! Norm conventions. A player's primal norm is ℓ1 on a simplex and ℓ2 on a
//! box. Joint vectors use `‖x‖² = Σ_i ‖x_i‖²` with dual `‖y‖²_* = Σ_i ‖y_i‖²_*`,
//! the pairing under which the sum of regularizers is `min_i K_i`-strongly
//! convex. Constants below are sharp or certified upper bounds for that pair.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::game::{ActionSet, GameSpec, MartingaleNoise, NormKind};
use crate::mirror::{min_strength, Regularizer};
use crate::numeric::{compensated_sum, positive_part_norm};
use crate::pricing::ScheduleSet;

/// Largest number of vertex profiles enumerated before falling back to
/// certified bounds.
pub const VERTEX_BUDGET: usize = 1_000_000;

/// Sensitivity the bound is stated for.
pub const BOUND_BETA: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameConstants {
    /// `‖Aᵀλ‖_* <= c1 ‖λ‖₂`.
    pub c1: f64,
    /// `sup ‖v(x)‖_*`.
    pub c2: f64,
    /// `sup ‖A x - b‖₂`.
    pub c3: f64,
    /// `min_i K_i`.
    pub k: f64,
    /// `Σ_i (max ψ_i - min ψ_i)`.
    pub delta_psi: f64,
    /// `2 (c2²/K + 2 c3²)`.
    pub c_tilde1: f64,
    /// Dominates `‖λ*‖₂`; set from a VI solution or overridden.
    pub c_tilde2: Option<f64>,
    /// `sqrt` of the noise second-moment bound.
    pub sigma_star: f64,
    /// Whether `c1`, `c2`, `c3` are exact suprema (vs certified bounds).
    pub exact: ExactFlags,
    /// Largest learning rate admitting any progressivity: `sqrt(K)/(4 c1)`.
    pub gamma_max_discriminant: f64,
    /// The variant `sqrt(K/2)/(4 c1)` quoted alongside the interval.
    pub gamma_max_stated: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactFlags {
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
}

/// Caller-supplied values that replace computed constants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantOverrides {
    pub c2: Option<f64>,
    pub c_tilde2: Option<f64>,
    pub sigma_star: Option<f64>,
}

impl GameConstants {
    /// Constants from known values, with the derived fields filled in.
    pub fn from_parts(c1: f64, c2: f64, c3: f64, k: f64, delta_psi: f64, sigma_star: f64) -> Self {
        Self {
            c1,
            c2,
            c3,
            k,
            delta_psi,
            c_tilde1: 0.0,
            c_tilde2: None,
            sigma_star,
            exact: ExactFlags {
                c1: false,
                c2: false,
                c3: false,
            },
            gamma_max_discriminant: 0.0,
            gamma_max_stated: 0.0,
        }
        .finish()
    }

    /// `C̃₂ = ‖λ*‖₂ + 1`.
    pub fn with_multipliers(mut self, solution: &VISolution) -> Self {
        self.c_tilde2 = Some(solution.lambda_star.norm() + 1.0);
        self
    }

    pub fn with_c_tilde2(mut self, value: f64) -> Self {
        self.c_tilde2 = Some(value);
        self
    }

    fn finish(mut self) -> Self {
        self.c_tilde1 = 2.0 * (self.c2 * self.c2 / self.k + 2.0 * self.c3 * self.c3);
        self.gamma_max_discriminant = self.k.sqrt() / (4.0 * self.c1);
        self.gamma_max_stated = (self.k / 2.0).sqrt() / (4.0 * self.c1);
        self
    }
}

/// Players with identical action set and resource columns, which is what
/// the vertex enumerations can collapse.
struct BlockGroup {
    set: ActionSet,
    /// `A_i` of a representative member (`R × D_i`).
    columns: DMatrix<f64>,
    members: Vec<usize>,
}

fn block_groups(game: &GameSpec) -> Vec<BlockGroup> {
    let a = &game.resources().a;
    let mut groups: Vec<BlockGroup> = Vec::new();
    for (i, set) in game.action_sets().iter().enumerate() {
        let r = game.block_range(i);
        let cols = a.columns(r.start, r.len()).into_owned();
        match groups
            .iter_mut()
            .find(|g| g.set == *set && g.columns == cols)
        {
            Some(g) => g.members.push(i),
            None => groups.push(BlockGroup {
                set: set.clone(),
                columns: cols,
                members: vec![i],
            }),
        }
    }
    groups
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Calls `f` with every way to distribute `m` identical items over `bins`.
fn for_each_composition(m: usize, bins: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(rest: usize, k: usize, counts: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if k + 1 == counts.len() {
            counts[k] = rest;
            f(counts);
            return;
        }
        for c in 0..=rest {
            counts[k] = c;
            rec(rest - c, k + 1, counts, f);
        }
    }
    let mut counts = vec![0; bins];
    rec(m, 0, &mut counts, f);
}

/// `C1`: sharp via enumeration of vertex selections per group when small,
/// otherwise `sqrt(Σ_i ‖A_i‖²)` with block-appropriate operator norms.
fn operator_constant(game: &GameSpec) -> (f64, bool) {
    let groups = block_groups(game);
    let r = game.n_resources();
    // Box blocks contribute a fixed quadratic form λᵀ A_i A_iᵀ λ.
    let mut fixed = DMatrix::zeros(r, r);
    let mut choice_groups = Vec::new();
    for g in &groups {
        match g.set.norm() {
            NormKind::L2 => fixed += &g.columns * g.columns.transpose() * g.members.len() as f64,
            NormKind::L1 => choice_groups.push(g),
        }
    }
    // sup_λ Σ_i max_k (a_ik·λ)² is convex in the relaxed selection, so the
    // maximum sits at a vertex where a whole group picks one column.
    let selections: f64 = choice_groups
        .iter()
        .map(|g| g.columns.ncols() as f64)
        .product();
    if selections <= VERTEX_BUDGET as f64 {
        let mut best: f64 = 0.0;
        let mut pick = vec![0usize; choice_groups.len()];
        loop {
            let mut m = fixed.clone();
            for (g, &k) in choice_groups.iter().zip(&pick) {
                let col = g.columns.column(k);
                m += col * col.transpose() * g.members.len() as f64;
            }
            best = best.max(largest_eigenvalue(&m));
            // Odometer over selections.
            let mut j = 0;
            loop {
                if j == pick.len() {
                    return (best.max(0.0).sqrt(), true);
                }
                pick[j] += 1;
                if pick[j] < choice_groups[j].columns.ncols() {
                    break;
                }
                pick[j] = 0;
                j += 1;
            }
        }
    }
    let mut bound = largest_eigenvalue(&fixed).max(0.0);
    for g in choice_groups {
        let widest = g
            .columns
            .column_iter()
            .map(|c| c.norm_squared())
            .fold(0.0, f64::max);
        bound += widest * g.members.len() as f64;
    }
    (bound.sqrt(), false)
}

fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.max()
}

/// Number of joint vertex profiles of `𝒳`.
fn vertex_profiles(game: &GameSpec) -> f64 {
    game.action_sets()
        .iter()
        .map(|s| match s {
            ActionSet::Simplex { dim } => *dim as f64,
            ActionSet::Hyperbox { lower, .. } => 2f64.powi(lower.len() as i32),
        })
        .product()
}

/// Calls `f` with every joint vertex of `𝒳`.
fn for_each_vertex(game: &GameSpec, f: &mut impl FnMut(&DVector<f64>)) -> Result<()> {
    let verts: Vec<Vec<Vec<f64>>> = game
        .action_sets()
        .iter()
        .map(ActionSet::vertices)
        .collect::<Result<_>>()?;
    let mut pick = vec![0usize; verts.len()];
    let mut x = DVector::zeros(game.total_dim());
    loop {
        for (i, &k) in pick.iter().enumerate() {
            let r = game.block_range(i);
            x.as_mut_slice()[r].copy_from_slice(&verts[i][k]);
        }
        f(&x);
        let mut j = 0;
        loop {
            if j == pick.len() {
                return Ok(());
            }
            pick[j] += 1;
            if pick[j] < verts[j].len() {
                break;
            }
            pick[j] = 0;
            j += 1;
        }
    }
}

/// Range of a linear form `w·x + c` over `𝒳` (separable per block).
fn linear_range(game: &GameSpec, w: &[f64], c: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (c, c);
    for (i, set) in game.action_sets().iter().enumerate() {
        let wi = &w[game.block_range(i)];
        match set {
            ActionSet::Simplex { .. } => {
                lo += wi.iter().copied().fold(f64::INFINITY, f64::min);
                hi += wi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
            ActionSet::Hyperbox { lower, upper } => {
                for ((&wk, &l), &u) in wi.iter().zip(lower).zip(upper) {
                    lo += (wk * l).min(wk * u);
                    hi += (wk * l).max(wk * u);
                }
            }
        }
    }
    (lo, hi)
}

/// `C2` for an affine field `v = M x + c`.
fn gradient_constant(game: &GameSpec, m: &DMatrix<f64>, c: &DVector<f64>) -> Result<(f64, bool)> {
    if vertex_profiles(game) <= VERTEX_BUDGET as f64 {
        // ‖v(x)‖²_* is convex, so the supremum is attained at a vertex.
        let mut best: f64 = 0.0;
        for_each_vertex(game, &mut |x| {
            let v = m * x + c;
            best = best.max(game.dual_norm(v.as_slice()));
        })?;
        return Ok((best, true));
    }
    // Σ_i sup_x ‖v_i(x)‖²_*, each block bounded separately.
    let mut total = 0.0;
    for (i, set) in game.action_sets().iter().enumerate() {
        let rows = game.block_range(i);
        let block_sup = match set.norm() {
            NormKind::L1 => rows
                .map(|row| {
                    let w: Vec<f64> = m.row(row).iter().copied().collect();
                    let (lo, hi) = linear_range(game, &w, c[row]);
                    lo.abs().max(hi.abs())
                })
                .fold(0.0, f64::max),
            NormKind::L2 => rows
                .map(|row| {
                    let w: Vec<f64> = m.row(row).iter().copied().collect();
                    let (lo, hi) = linear_range(game, &w, c[row]);
                    lo.abs().max(hi.abs()).powi(2)
                })
                .sum::<f64>()
                .sqrt(),
        };
        total += block_sup * block_sup;
    }
    Ok((total.sqrt(), false))
}

/// `C3 = sup ‖A x - b‖₂`: exact over vertex multisets of identical player
/// groups when their count is within budget, else the per-resource bound.
fn congestion_constant(game: &GameSpec) -> Result<(f64, bool)> {
    let groups = block_groups(game);
    let b = &game.resources().b;
    let r = game.n_resources();
    let mut images_per_group = Vec::new();
    let mut count = 1.0;
    for g in &groups {
        let images: Vec<DVector<f64>> = g
            .set
            .vertices()?
            .iter()
            .map(|v| &g.columns * DVector::from_column_slice(v))
            .collect();
        count *= binomial(g.members.len() + images.len() - 1, images.len() - 1);
        images_per_group.push(images);
    }
    if count <= VERTEX_BUDGET as f64 {
        // Partial sums reachable by each group, then their Minkowski sum.
        let mut reachable: Vec<DVector<f64>> = vec![-b.clone()];
        for (g, images) in groups.iter().zip(&images_per_group) {
            let mut sums = Vec::new();
            for_each_composition(g.members.len(), images.len(), &mut |counts| {
                let mut s = DVector::zeros(r);
                for (n, img) in counts.iter().zip(images) {
                    if *n > 0 {
                        s += img * *n as f64;
                    }
                }
                sums.push(s);
            });
            reachable = reachable
                .iter()
                .flat_map(|base| sums.iter().map(move |s| base + s))
                .collect();
        }
        let best = reachable.iter().map(|v| v.norm()).fold(0.0, f64::max);
        return Ok((best, true));
    }
    let a = &game.resources().a;
    let mut total = 0.0;
    for row in 0..r {
        let w: Vec<f64> = a.row(row).iter().copied().collect();
        let (lo, hi) = linear_range(game, &w, -b[row]);
        total += lo.abs().max(hi.abs()).powi(2);
    }
    Ok((total.sqrt(), false))
}

/// Constants of `game` under the given regularizers.
pub fn compute_constants(game: &GameSpec, regs: &[Regularizer]) -> Result<GameConstants> {
    compute_constants_with(game, regs, ConstantOverrides::default())
}

pub fn compute_constants_with(
    game: &GameSpec,
    regs: &[Regularizer],
    overrides: ConstantOverrides,
) -> Result<GameConstants> {
    check_dim("regularizers", game.n_players(), regs.len())?;
    for (reg, set) in regs.iter().zip(game.action_sets()) {
        if reg.action_set() != *set {
            return Err(Error::InvalidGame(
                "regularizer does not live on the player's action set".into(),
            ));
        }
    }
    let (c1, c1_exact) = operator_constant(game);
    let (c2, c2_exact) = match (overrides.c2, game.gradient().affine_parts()) {
        (Some(v), _) => (v, false),
        (None, Some((m, c))) => gradient_constant(game, &m, &c)?,
        (None, None) => {
            return Err(Error::Unsupported(
                "sup of a custom gradient field must be supplied as an override".into(),
            ))
        }
    };
    let (c3, c3_exact) = congestion_constant(game)?;
    let sigma_star = overrides
        .sigma_star
        .unwrap_or_else(|| game.noise().second_moment_bound(game).sqrt());
    Ok(GameConstants {
        c1,
        c2,
        c3,
        k: min_strength(regs),
        delta_psi: regs.iter().map(Regularizer::range).sum(),
        c_tilde1: 0.0,
        c_tilde2: overrides.c_tilde2,
        sigma_star,
        exact: ExactFlags {
            c1: c1_exact,
            c2: c2_exact,
            c3: c3_exact,
        },
        gamma_max_discriminant: 0.0,
        gamma_max_stated: 0.0,
    }
    .finish())
}

fn rational(x: f64) -> Option<BigRational> {
    BigRational::from_f64(x)
}

/// `γ²C1²/(4K)` as an exact rational.
fn tracking_offset(gamma: f64, consts: &GameConstants) -> Option<BigRational> {
    let g = rational(gamma)?;
    let c = rational(consts.c1)?;
    let k = rational(consts.k)?;
    if k.is_zero() {
        return None;
    }
    Some(&g * &g * &c * &c / (k * BigRational::from_integer(BigInt::from(4))))
}

fn tc_lhs(eta: &BigRational, offset: &BigRational) -> BigRational {
    let quarter = BigRational::new(BigInt::from(1), BigInt::from(4));
    eta * eta - eta * &quarter + offset
}

/// `η² - η/4 + γ²C1²/(4K) <= 0`, decided in exact rational arithmetic on the
/// given floating-point inputs.
pub fn trackability_check(gamma: f64, eta: f64, consts: &GameConstants) -> bool {
    if gamma < 0.0 || eta < 0.0 {
        return false;
    }
    match (rational(eta), tracking_offset(gamma, consts)) {
        (Some(e), Some(off)) => !tc_lhs(&e, &off).is_positive(),
        _ => false,
    }
}

/// Progressivities admitted by the trackability condition at learning rate
/// `gamma`: the closed interval between the roots
/// `(1/4 ± sqrt(1/16 - γ²C1²/K))/2`, returned as the outermost floats that
/// pass [`trackability_check`]. `None` when no float passes.
pub fn eta_interval(gamma: f64, consts: &GameConstants) -> Option<(f64, f64)> {
    let pass = |e: f64| trackability_check(gamma, e, consts);
    // The roots straddle the vertex 1/8, so the interval is empty iff 1/8 fails.
    const VERTEX: f64 = 0.125;
    if !pass(VERTEX) {
        return None;
    }
    // Non-negative floats are ordered like their bit patterns.
    let boundary = |mut inside: u64, mut outside: u64| {
        while inside.abs_diff(outside) > 1 {
            let mid = inside / 2 + outside / 2 + (inside % 2 + outside % 2) / 2;
            if pass(f64::from_bits(mid)) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        f64::from_bits(inside)
    };
    let lo = if pass(0.0) {
        0.0
    } else {
        boundary(VERTEX.to_bits(), 0)
    };
    let hi = boundary(VERTEX.to_bits(), 0.25f64.next_up().to_bits());
    Some((lo, hi))
}

/// Expected-violation bound at horizon `t`:
/// `2η̄(Δψ + C̃1 Σγ²) + η̄²(C̃2² + (4/K) Σ γ² E‖ξ‖²_*)`, `η̄ = Σ η + 1`.
///
/// Requires `β ≡ 2`, `ζ ≡ γ` and the trackability condition at every
/// `τ < t`; the first violation is reported.
pub fn theorem1_bound(
    t: usize,
    schedules: &ScheduleSet,
    consts: &GameConstants,
    second_moment: impl Fn(usize) -> f64,
) -> Result<f64> {
    let c_tilde2 = consts.c_tilde2.ok_or_else(|| {
        Error::param("c_tilde2", "no multiplier bound; solve the VI or override it")
    })?;
    let mut sum_eta = Vec::with_capacity(t);
    let mut sum_g2 = Vec::with_capacity(t);
    let mut sum_noise = Vec::with_capacity(t);
    for tau in 0..t {
        let p = schedules.at_step(tau);
        if p.beta != BOUND_BETA {
            return Err(Error::HypothesisViolated {
                tau,
                reason: format!("price sensitivity is {} instead of 2", p.beta),
            });
        }
        if (p.zeta - p.gamma).abs() > 1e-12 * p.gamma.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::HypothesisViolated {
                tau,
                reason: format!("resource rate {} differs from learning rate {}", p.zeta, p.gamma),
            });
        }
        if !trackability_check(p.gamma, p.eta, consts) {
            return Err(Error::HypothesisViolated {
                tau,
                reason: format!("trackability fails for gamma={}, eta={}", p.gamma, p.eta),
            });
        }
        let m = second_moment(tau);
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::param("second_moment", format!("invalid value {m} at step {tau}")));
        }
        sum_eta.push(p.eta);
        sum_g2.push(p.gamma * p.gamma);
        sum_noise.push(p.gamma * p.gamma * m);
    }
    let eta_bar = compensated_sum(sum_eta) + 1.0;
    let g2 = compensated_sum(sum_g2);
    let noise = compensated_sum(sum_noise);
    Ok(2.0 * eta_bar * (consts.delta_psi + consts.c_tilde1 * g2)
        + eta_bar * eta_bar * (c_tilde2 * c_tilde2 + 4.0 / consts.k * noise))
}

/// Residuals of the KKT system of `VI(𝒬, v)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// `‖x - Π_𝒳(x + v(x) - Aᵀλ)‖₂`.
    pub stationarity: f64,
    /// `‖[A x - b]₊‖₂`.
    pub primal_feasibility: f64,
    /// `‖[-λ]₊‖₂`.
    pub dual_feasibility: f64,
    /// `Σ_r |λ_r (A x - b)_r|`.
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.dual_feasibility)
            .max(self.complementarity)
    }
}

impl fmt::Display for KktResidual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stationarity {:.3e}, primal {:.3e}, dual {:.3e}, complementarity {:.3e}",
            self.stationarity, self.primal_feasibility, self.dual_feasibility, self.complementarity
        )
    }
}

pub fn kkt_residual(x: &DVector<f64>, lambda: &DVector<f64>, game: &GameSpec) -> Result<KktResidual> {
    check_dim("kkt point", game.total_dim(), x.len())?;
    check_dim("kkt multipliers", game.n_resources(), lambda.len())?;
    let a = &game.resources().a;
    let mut moved = x + game.gradient_at(x)? - a.transpose() * lambda;
    game.project(&mut moved);
    let phi = game.congestion(x)?;
    Ok(KktResidual {
        stationarity: (x - moved).norm(),
        primal_feasibility: positive_part_norm(phi.iter().copied()),
        dual_feasibility: positive_part_norm(lambda.iter().map(|l| -l)),
        complementarity: lambda.iter().zip(phi.iter()).map(|(l, p)| (l * p).abs()).sum(),
    })
}

/// `ṽ(x, λ) = (v(x) - Aᵀλ, A x - b)`.
pub fn extended_field(
    game: &GameSpec,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let a = &game.resources().a;
    Ok((
        game.gradient_at(x)? - a.transpose() * lambda,
        game.congestion(x)?,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VISolution {
    pub x_star: DVector<f64>,
    pub lambda_star: DVector<f64>,
    pub residuals: KktResidual,
    pub iterations: usize,
    /// Final box `[0, cap]^R` the multipliers were searched in.
    pub dual_cap: f64,
}

const CHECK_EVERY: usize = 25;
const MAX_CAP_DOUBLINGS: usize = 10;

/// Lipschitz constant of `ṽ`: operator norm of `[[M, -Aᵀ], [A, 0]]` for
/// affine fields, a sampled estimate otherwise.
fn extended_lipschitz<R: Rng>(game: &GameSpec, rng: &mut R) -> Result<f64> {
    let a = &game.resources().a;
    let (d, r) = (game.total_dim(), game.n_resources());
    if let Some((m, _)) = game.gradient().affine_parts() {
        let mut full = DMatrix::zeros(d + r, d + r);
        full.view_mut((0, 0), (d, d)).copy_from(&m);
        full.view_mut((0, d), (d, r)).copy_from(&(-a.transpose()));
        full.view_mut((d, 0), (r, d)).copy_from(a);
        return Ok(full.singular_values().max());
    }
    let mut best: f64 = 0.0;
    for _ in 0..200 {
        let x = game.sample_point(rng);
        let y = game.sample_point(rng);
        let l1 = DVector::from_fn(r, |_, _| rng.random_range(0.0..1.0));
        let l2 = DVector::from_fn(r, |_, _| rng.random_range(0.0..1.0));
        let (f1, g1) = extended_field(game, &x, &l1)?;
        let (f2, g2) = extended_field(game, &y, &l2)?;
        let num = ((f1 - f2).norm_squared() + (g1 - g2).norm_squared()).sqrt();
        let den = ((&x - &y).norm_squared() + (&l1 - &l2).norm_squared()).sqrt();
        if den > 0.0 {
            best = best.max(num / den);
        }
    }
    Ok(best * 1.5)
}

/// Solves `VI(𝒳 × ℝ^R_+, ṽ)` by extragradient on `𝒳 × [0, cap]^R`, doubling
/// the cap while multipliers touch it. The `x` part solves `VI(𝒬, v)`.
pub fn solve_constrained_vi(game: &GameSpec, tol: f64, max_iters: usize) -> Result<VISolution> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let gap = crate::game::sampled_monotonicity(game, 200, &mut rng)?;
    if gap > 1e-8 {
        return Err(Error::InvalidGame(format!(
            "gradient field is not monotone (sampled gap {gap:.3e})"
        )));
    }
    let regs: Vec<Regularizer> = game
        .action_sets()
        .iter()
        .map(Regularizer::for_action_set)
        .collect();
    let c2 = match compute_constants(game, &regs) {
        Ok(c) => c.c2,
        Err(Error::Unsupported(_)) => {
            let mut best: f64 = 0.0;
            for _ in 0..1000 {
                let x = game.sample_point(&mut rng);
                best = best.max(game.dual_norm(game.gradient_at(&x)?.as_slice()));
            }
            2.0 * best
        }
        Err(e) => return Err(e),
    };
    let mut cap = 2.0 * (c2 * game.diameter() + 1.0);
    let lipschitz = extended_lipschitz(game, &mut rng)?.max(1e-12);
    let mut step = 0.5 / lipschitz;

    let project_dual = |l: &mut DVector<f64>, cap: f64| {
        l.iter_mut().for_each(|v| *v = v.clamp(0.0, cap));
    };
    let mut x = game.barycenter();
    let mut lambda = DVector::zeros(game.n_resources());
    let mut doublings = 0;
    let mut last = f64::INFINITY;
    let mut residuals = kkt_residual(&x, &lambda, game)?;

    for iter in 1..=max_iters {
        let (fx, fl) = extended_field(game, &x, &lambda)?;
        let mut xh = &x + &fx * step;
        game.project(&mut xh);
        let mut lh = &lambda + &fl * step;
        project_dual(&mut lh, cap);

        let (gx, gl) = extended_field(game, &xh, &lh)?;
        let mut xn = &x + gx * step;
        game.project(&mut xn);
        let mut ln = &lambda + gl * step;
        project_dual(&mut ln, cap);
        x = xn;
        lambda = ln;

        if iter % CHECK_EVERY != 0 && iter != max_iters {
            continue;
        }
        if x.iter().chain(lambda.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("extragradient iterate"));
        }
        residuals = kkt_residual(&x, &lambda, game)?;
        let at_cap = lambda.iter().any(|&l| l >= cap * (1.0 - 1e-9));
        if at_cap {
            if doublings == MAX_CAP_DOUBLINGS {
                return Err(Error::NotConverged {
                    iterations: iter,
                    residuals,
                });
            }
            cap *= 2.0;
            doublings += 1;
            last = f64::INFINITY;
            continue;
        }
        let r = residuals.max();
        if r <= tol {
            return Ok(VISolution {
                x_star: x,
                lambda_star: lambda,
                residuals,
                iterations: iter,
                dual_cap: cap,
            });
        }
        if r > 2.0 * last {
            step *= 0.5;
        }
        last = r;
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residuals,
    })
}

/// Largest `⟨x - x*, v(x*)⟩` over `samples` points drawn uniformly from `𝒬`
/// by rejection from `𝒳`. Non-positive up to tolerance for a VI solution.
/// Returns the gap and the number of accepted samples.
pub fn sampled_vi_gap<R: Rng + ?Sized>(
    game: &GameSpec,
    x_star: &DVector<f64>,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, usize)> {
    let v = game.gradient_at(x_star)?;
    let mut worst = f64::NEG_INFINITY;
    let mut accepted = 0;
    let max_draws = samples.saturating_mul(1000);
    let mut draws = 0;
    while accepted < samples && draws < max_draws {
        draws += 1;
        let x = game.sample_point(rng);
        if game.congestion(&x)?.iter().any(|&p| p > 0.0) {
            continue;
        }
        accepted += 1;
        worst = worst.max((&x - x_star).dot(&v));
    }
    Ok((worst, accepted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{GradientOracle, NoiseModel, ResourceConstraints};
    use crate::pricing::Schedule;
    use crate::quad::{make_quadratic_game, make_quadratic_game_with_capacity};

    fn manual(c1: f64, k: f64) -> GameConstants {
        GameConstants::from_parts(c1, 1.0, 1.0, k, 0.0, 0.0)
    }

    fn toy_game() -> GameSpec {
        let rc = ResourceConstraints::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 0.5))
            .unwrap();
        GameSpec::new(
            vec![ActionSet::unit_box(1)],
            GradientOracle::Affine {
                matrix: DMatrix::from_element(1, 1, -1.0),
                offset: DVector::from_element(1, 1.0),
            },
            rc,
            NoiseModel::none(),
        )
        .unwrap()
    }

    fn entropies(game: &GameSpec) -> Vec<Regularizer> {
        game.action_sets().iter().map(Regularizer::for_action_set).collect()
    }

    #[test]
    fn quad_bench_constants() {
        let game = make_quadratic_game(20, 5, 1).unwrap();
        let c = compute_constants(&game, &entropies(&game)).unwrap();
        // Aᵀλ repeats 4λ in every block: ‖Aᵀλ‖²_* = 20·16‖λ‖²_∞.
        assert!((c.c1 - 4.0 * 20f64.sqrt()).abs() < 1e-9, "c1 {}", c.c1);
        assert!(c.exact.c1);
        // All twenty players on one resource: (64, -16, -16, -16, -16).
        assert!((c.c3 - 5120f64.sqrt()).abs() < 1e-9, "c3 {}", c.c3);
        assert!((c.c3 - 71.554).abs() < 1e-3);
        assert!(c.exact.c3);
        assert!((c.delta_psi - 20.0 * 5f64.ln()).abs() < 1e-12);
        assert!((c.delta_psi - 32.189).abs() < 1e-3);
        assert_eq!(c.k, 1.0);
        assert!(!c.exact.c2);
        let expect = 2.0 * (c.c2 * c.c2 / c.k + 2.0 * c.c3 * c.c3);
        assert_eq!(c.c_tilde1, expect);
    }

    #[test]
    fn enumerated_constants_match_brute_force_on_small_games() {
        for seed in 0..5 {
            let game = make_quadratic_game_with_capacity(3, 2, seed, 6.6).unwrap();
            let c = compute_constants(&game, &entropies(&game)).unwrap();
            let mut c2: f64 = 0.0;
            let mut c3: f64 = 0.0;
            // 2³ vertex profiles, enumerated by hand.
            for mask in 0..8u32 {
                let x = DVector::from_fn(6, |j, _| {
                    let player = j / 2;
                    let pick = (mask >> player & 1) as usize;
                    if j % 2 == pick { 1.0 } else { 0.0 }
                });
                c2 = c2.max(game.dual_norm(game.gradient_at(&x).unwrap().as_slice()));
                c3 = c3.max(game.congestion(&x).unwrap().norm());
            }
            assert!(c.exact.c2 && c.exact.c3);
            assert!((c.c2 - c2).abs() < 1e-12);
            assert!((c.c3 - c3).abs() < 1e-12);
            // C1 dominates sampled ratios and is attained at a unit vector.
            let a = &game.resources().a;
            for r in 0..2 {
                let mut l = DVector::zeros(2);
                l[r] = 1.0;
                assert!(game.dual_norm((a.transpose() * &l).as_slice()) <= c.c1 + 1e-12);
            }
            assert!((c.c1 - 4.0 * 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn certified_bounds_dominate_samples() {
        let game = make_quadratic_game(20, 5, 2).unwrap();
        let c = compute_constants(&game, &entropies(&game)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let x = game.sample_point(&mut rng);
            assert!(game.dual_norm(game.gradient_at(&x).unwrap().as_slice()) <= c.c2);
            let l = DVector::from_fn(5, |_, _| rng.random_range(0.0..1.0));
            let lhs = game.dual_norm((game.resources().a.transpose() * &l).as_slice());
            assert!(lhs <= c.c1 * l.norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn custom_fields_need_a_gradient_bound() {
        let rc = ResourceConstraints::new(DMatrix::from_element(1, 2, 1.0), DVector::zeros(1)).unwrap();
        let game = GameSpec::new(
            vec![ActionSet::simplex(2)],
            GradientOracle::custom(2, |x| -x.clone()),
            rc,
            NoiseModel::none(),
        )
        .unwrap();
        let regs = entropies(&game);
        assert!(matches!(compute_constants(&game, &regs), Err(Error::Unsupported(_))));
        let c = compute_constants_with(
            &game,
            &regs,
            ConstantOverrides {
                c2: Some(1.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(c.c2, 1.0);
    }

    #[test]
    fn trackability_examples() {
        let c = manual(4.0, 1.0);
        assert!(!trackability_check(0.1, 0.25, &c));
        assert!(!trackability_check(1e-9, 0.25, &c));
        assert!(trackability_check(1.0 / 32.0, 1.0 / 8.0, &c));
        assert!(trackability_check(0.0, 1.0 / 8.0, &c));
        assert!(!trackability_check(0.0, 0.3, &c));
    }

    #[test]
    fn eta_interval_examples() {
        let c = manual(4.0, 1.0);
        assert_eq!(eta_interval(0.0, &c), Some((0.0, 0.25)));
        // γ²C1²/K = 1/16 exactly at γ = 1/16.
        assert_eq!(eta_interval(1.0 / 16.0, &c), Some((0.125, 0.125)));
        assert_eq!(eta_interval(0.0626, &c), None);
        assert!(c.gamma_max_discriminant == 1.0 / 16.0);
        assert!((c.gamma_max_stated - (0.5f64).sqrt() / 16.0).abs() < 1e-15);
    }

    #[test]
    fn eta_interval_endpoints_are_tight() {
        let c = manual(4.0 * 20f64.sqrt(), 1.0);
        for gamma in [1e-4, 1e-3, 5e-3, 0.01] {
            if let Some((lo, hi)) = eta_interval(gamma, &c) {
                assert!(trackability_check(gamma, lo, &c));
                assert!(trackability_check(gamma, hi, &c));
                assert!(!trackability_check(gamma, lo.next_down(), &c) || lo == 0.0);
                assert!(!trackability_check(gamma, hi.next_up(), &c));
            }
        }
    }

    #[test]
    fn bound_with_zero_rates_is_the_constant_term() {
        let mut c = manual(4.0, 1.0).with_c_tilde2(3.0);
        c.delta_psi = 2.5;
        let s = ScheduleSet {
            gamma: Schedule::constant(0.0),
            zeta: Schedule::constant(0.0),
            eta: Schedule::constant(0.0),
            beta: Schedule::constant(2.0),
        };
        let b = theorem1_bound(17, &s, &c, |_| 0.0).unwrap();
        assert_eq!(b, 2.0 * 2.5 + 9.0);
    }

    #[test]
    fn bound_with_constant_rates_has_closed_form() {
        let mut c = manual(4.0, 1.0).with_c_tilde2(2.0);
        c.delta_psi = 1.3;
        c.c_tilde1 = 7.0;
        let (g, e, m, t) = (0.01, 0.1, 4.0, 300usize);
        let s = ScheduleSet {
            gamma: Schedule::constant(g),
            zeta: Schedule::constant(g),
            eta: Schedule::constant(e),
            beta: Schedule::constant(2.0),
        };
        let tf = t as f64;
        let eta_bar = e * tf + 1.0;
        let expect = 2.0 * eta_bar * (1.3 + 7.0 * g * g * tf)
            + eta_bar * eta_bar * (4.0 + 4.0 * g * g * tf * m);
        let got = theorem1_bound(t, &s, &c, |_| m).unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn bound_reports_the_first_failing_step() {
        let c = manual(4.0, 1.0).with_c_tilde2(1.0);
        let mut s = ScheduleSet {
            gamma: Schedule::constant(0.01),
            zeta: Schedule::constant(0.01),
            eta: Schedule::constant(0.1),
            beta: Schedule::constant(1.0),
        };
        assert!(matches!(
            theorem1_bound(5, &s, &c, |_| 0.0),
            Err(Error::HypothesisViolated { tau: 0, .. })
        ));
        s.beta = Schedule::constant(2.0);
        s.zeta = Schedule::constant(0.02);
        assert!(matches!(
            theorem1_bound(5, &s, &c, |_| 0.0),
            Err(Error::HypothesisViolated { .. })
        ));
        // η = 0.1 t leaves the admissible interval at t = 3.
        s.zeta = s.gamma;
        s.eta = Schedule::power_law(0.1, -1.0);
        match theorem1_bound(10, &s, &c, |_| 0.0) {
            Err(Error::HypothesisViolated { tau, .. }) => assert_eq!(tau, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(theorem1_bound(5, &s, &manual(4.0, 1.0), |_| 0.0).is_err());
    }

    #[test]
    fn kkt_toy_solution_has_zero_residuals() {
        let game = toy_game();
        let r = kkt_residual(&DVector::from_element(1, 0.5), &DVector::from_element(1, 0.5), &game)
            .unwrap();
        assert!(r.max() <= 1e-12, "{r}");
    }

    #[test]
    fn kkt_residual_isolates_the_failing_condition() {
        let game = toy_game();
        let r = kkt_residual(&DVector::from_element(1, 0.2), &DVector::zeros(1), &game).unwrap();
        assert!(r.stationarity > 0.0);
        assert_eq!(r.primal_feasibility, 0.0);
        assert_eq!(r.complementarity, 0.0);
        assert_eq!(r.dual_feasibility, 0.0);
        let r = kkt_residual(&DVector::from_element(1, 0.9), &DVector::zeros(1), &game).unwrap();
        assert!((r.primal_feasibility - 0.4).abs() < 1e-15);
    }

    #[test]
    fn extragradient_solves_the_toy_problem() {
        let sol = solve_constrained_vi(&toy_game(), 1e-10, 100_000).unwrap();
        assert!((sol.x_star[0] - 0.5).abs() < 1e-9);
        assert!((sol.lambda_star[0] - 0.5).abs() < 1e-9);
        assert!(sol.residuals.max() <= 1e-10);
    }

    #[test]
    fn inactive_constraints_give_zero_multipliers() {
        // Capacity 16 cannot bind for three players on two resources.
        let game = make_quadratic_game(3, 2, 4).unwrap();
        let sol = solve_constrained_vi(&game, 1e-8, 200_000).unwrap();
        assert!(sol.lambda_star.iter().all(|&l| l == 0.0));
        let free = kkt_residual(&sol.x_star, &DVector::zeros(2), &game).unwrap();
        assert!(free.stationarity <= 1e-8);
    }

    #[test]
    fn extended_field_is_monotone() {
        let game = make_quadratic_game_with_capacity(3, 2, 7, 6.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (x, y) = (game.sample_point(&mut rng), game.sample_point(&mut rng));
            let l1 = DVector::from_fn(2, |_, _| rng.random_range(0.0..10.0));
            let l2 = DVector::from_fn(2, |_, _| rng.random_range(0.0..10.0));
            let (f1, g1) = extended_field(&game, &x, &l1).unwrap();
            let (f2, g2) = extended_field(&game, &y, &l2).unwrap();
            let total = (&x - &y).dot(&(&f1 - &f2)) + (&l1 - &l2).dot(&(&g1 - &g2));
            let primal = (&x - &y).dot(&(game.gradient_at(&x).unwrap() - game.gradient_at(&y).unwrap()));
            // The coupling terms cancel, leaving the monotone primal part.
            assert!((total - primal).abs() <= 1e-10 * (1.0 + primal.abs()));
            assert!(total <= 1e-9);
        }
    }

    #[test]
    fn power_law_schedules_eventually_track() {
        // γ = cγ τ^-p, η = cη τ^-q with q <= 2p and small constants.
        let c = manual(4.0 * 3f64.sqrt(), 1.0);
        for &p in &[0.25, 0.5, 0.75, 1.0] {
            for &frac in &[0.25, 0.5, 1.0] {
                let q = 2.0 * p * frac;
                let gamma = Schedule::power_law(0.02, p);
                let eta = Schedule::power_law(0.1, q);
                let from = 1;
                for t in (from..100_000).step_by(97) {
                    assert!(
                        trackability_check(gamma.eval(t), eta.eval(t), &c),
                        "p={p} q={q} t={t}"
                    );
                }
            }
        }
    }

    #[test]
    fn slower_decaying_learning_rate_breaks_tracking() {
        // q > 2p: η decays faster than γ², so the condition eventually fails.
        let c = manual(4.0, 1.0);
        let gamma = Schedule::power_law(0.02, 0.5);
        let eta = Schedule::power_law(0.1, 1.5);
        assert!((1..1_000_000).any(|t| !trackability_check(gamma.eval(t), eta.eval(t), &c)));
    }

    proptest::proptest! {
        #[test]
        fn eta_interval_agrees_with_the_check(
            gamma in 1e-6f64..0.2,
            c1 in 0.1f64..50.0,
            k in 0.05f64..5.0,
            etas in proptest::collection::vec(0.0f64..0.3, 32),
        ) {
            let c = manual(c1, k);
            match eta_interval(gamma, &c) {
                Some((lo, hi)) => {
                    for e in etas {
                        proptest::prop_assert_eq!(trackability_check(gamma, e, &c), lo <= e && e <= hi);
                    }
                }
                None => {
                    for e in etas {
                        proptest::prop_assert!(!trackability_check(gamma, e, &c));
                    }
                }
            }
        }
    }
}
