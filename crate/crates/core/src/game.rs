//! Game model: per-player action sets, the joint gradient field, coupled
//! linear resource constraints and the noisy first-order oracle.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::quad::QuadGameParams;

/// Tolerance used when checking membership of the probability simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Norm a player's action space is measured in. The dual norm is used for
/// gradients and scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// ℓ1 primal, ℓ∞ dual. Paired with the simplex.
    L1,
    /// ℓ2 primal and dual. Paired with boxes.
    L2,
}

impl NormKind {
    pub fn primal(self, x: &[f64]) -> f64 {
        match self {
            NormKind::L1 => x.iter().map(|v| v.abs()).sum(),
            NormKind::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    pub fn dual(self, y: &[f64]) -> f64 {
        match self {
            NormKind::L1 => y.iter().fold(0.0, |m, v| m.max(v.abs())),
            NormKind::L2 => y.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

/// Compact convex action set of a single player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSet {
    /// Probability simplex `{x >= 0, sum x = 1}` in `dim` coordinates.
    Simplex { dim: usize },
    /// Axis-aligned box `lower <= x <= upper`.
    #[serde(rename = "box")]
    Hyperbox { lower: Vec<f64>, upper: Vec<f64> },
}

impl ActionSet {
    pub fn simplex(dim: usize) -> Self {
        ActionSet::Simplex { dim }
    }

    pub fn unit_box(dim: usize) -> Self {
        ActionSet::Hyperbox {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ActionSet::Simplex { dim } => *dim,
            ActionSet::Hyperbox { lower, .. } => lower.len(),
        }
    }

    pub fn norm(&self) -> NormKind {
        match self {
            ActionSet::Simplex { .. } => NormKind::L1,
            ActionSet::Hyperbox { .. } => NormKind::L2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ActionSet::Simplex { dim } if *dim == 0 => {
                Err(Error::InvalidGame("simplex of dimension zero".into()))
            }
            ActionSet::Simplex { .. } => Ok(()),
            ActionSet::Hyperbox { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::InvalidGame(format!(
                        "box bounds have lengths {} and {}",
                        lower.len(),
                        upper.len()
                    )));
                }
                for (k, (lo, hi)) in lower.iter().zip(upper).enumerate() {
                    if !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::InvalidGame(format!(
                            "box coordinate {k} is unbounded"
                        )));
                    }
                    if lo > hi {
                        return Err(Error::InvalidGame(format!(
                            "box coordinate {k} is empty: [{lo}, {hi}]"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Membership up to an absolute tolerance.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            ActionSet::Simplex { .. } => {
                x.iter().all(|&v| v >= -tol) && (x.iter().sum::<f64>() - 1.0).abs() <= tol
            }
            ActionSet::Hyperbox { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol),
        }
    }

    /// Euclidean projection onto the set, in place.
    pub fn project(&self, x: &mut [f64]) {
        match self {
            ActionSet::Simplex { .. } => project_simplex(x),
            ActionSet::Hyperbox { lower, upper } => {
                for (v, (&lo, &hi)) in x.iter_mut().zip(lower.iter().zip(upper)) {
                    *v = v.clamp(lo, hi);
                }
            }
        }
    }

    /// Uniform sample (flat Dirichlet on the simplex).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ActionSet::Simplex { dim } => {
                let mut x: Vec<f64> = (0..*dim).map(|_| Exp1.sample(rng)).collect();
                let s: f64 = x.iter().sum();
                x.iter_mut().for_each(|v| *v /= s);
                x
            }
            ActionSet::Hyperbox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                .collect(),
        }
    }

    pub fn barycenter(&self) -> Vec<f64> {
        match self {
            ActionSet::Simplex { dim } => vec![1.0 / *dim as f64; *dim],
            ActionSet::Hyperbox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| 0.5 * (lo + hi))
                .collect(),
        }
    }

    /// Extreme points. Boxes enumerate `2^dim` corners, so dimensions above
    /// 20 are rejected.
    pub fn vertices(&self) -> Result<Vec<Vec<f64>>> {
        match self {
            ActionSet::Simplex { dim } => Ok((0..*dim)
                .map(|k| {
                    let mut e = vec![0.0; *dim];
                    e[k] = 1.0;
                    e
                })
                .collect()),
            ActionSet::Hyperbox { lower, upper } => {
                let d = lower.len();
                if d > 20 {
                    return Err(Error::Unsupported(format!(
                        "vertex enumeration of a {d}-dimensional box"
                    )));
                }
                Ok((0..1usize << d)
                    .map(|mask| {
                        (0..d)
                            .map(|k| if mask >> k & 1 == 1 { upper[k] } else { lower[k] })
                            .collect()
                    })
                    .collect())
            }
        }
    }

    /// Diameter in the set's own norm.
    pub fn diameter(&self) -> f64 {
        match self {
            ActionSet::Simplex { dim } if *dim > 1 => 2.0,
            ActionSet::Simplex { .. } => 0.0,
            ActionSet::Hyperbox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| (hi - lo) * (hi - lo))
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(x: &mut [f64]) {
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    for v in x.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

/// Coupled linear resource constraints `A x <= b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResourceConstraints {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Optional strictly feasible witness (`A x < b` component-wise).
    pub slater_point: Option<DVector<f64>>,
}

impl ResourceConstraints {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 {
            return Err(Error::InvalidGame("at least one resource is required".into()));
        }
        check_dim("capacity vector", a.nrows(), b.len())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("resource constraints"));
        }
        Ok(Self {
            a,
            b,
            slater_point: None,
        })
    }

    pub fn with_slater_point(mut self, x: DVector<f64>) -> Result<Self> {
        let phi = self.congestion(&x)?;
        if let Some(r) = phi.iter().position(|&p| p >= 0.0) {
            return Err(Error::InvalidGame(format!(
                "Slater witness is not strictly feasible on resource {r} (slack {})",
                -phi[r]
            )));
        }
        self.slater_point = Some(x);
        Ok(self)
    }

    pub fn n_resources(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// `φ(x) = A x - b`.
    pub fn congestion(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("congestion", self.dim(), x.len())?;
        Ok(&self.a * x - &self.b)
    }
}

/// Free-function form of [`ResourceConstraints::congestion`].
pub fn congestion(x: &DVector<f64>, rc: &ResourceConstraints) -> Result<DVector<f64>> {
    rc.congestion(x)
}

/// User-supplied gradient field.
pub type FieldFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// Joint utility gradient `v(x) = (∇_{x_i} u_i(x))_i`.
#[derive(Clone)]
pub enum GradientOracle {
    /// `v(x) = M x + c`.
    Affine {
        matrix: DMatrix<f64>,
        offset: DVector<f64>,
    },
    /// The quadratic allocation game, evaluated block-wise.
    Quadratic(QuadGameParams),
    /// Arbitrary callable. Not serializable, and constants that need
    /// closed-form suprema of `v` must be supplied by the caller.
    Custom { dim: usize, field: Arc<FieldFn> },
}

impl fmt::Debug for GradientOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradientOracle::Affine { matrix, .. } => f
                .debug_struct("Affine")
                .field("dim", &matrix.nrows())
                .finish(),
            GradientOracle::Quadratic(p) => f.debug_tuple("Quadratic").field(p).finish(),
            GradientOracle::Custom { dim, .. } => {
                f.debug_struct("Custom").field("dim", dim).finish()
            }
        }
    }
}

impl GradientOracle {
    pub fn custom<F>(dim: usize, field: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        GradientOracle::Custom {
            dim,
            field: Arc::new(field),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            GradientOracle::Affine { matrix, .. } => matrix.nrows(),
            GradientOracle::Quadratic(p) => p.n_players * p.dim,
            GradientOracle::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("gradient oracle", self.dim(), x.len())?;
        let v = match self {
            GradientOracle::Affine { matrix, offset } => matrix * x + offset,
            GradientOracle::Quadratic(p) => crate::quad::quad_gradient(x, p)?,
            GradientOracle::Custom { field, .. } => field(x),
        };
        check_dim("gradient oracle output", self.dim(), v.len())?;
        Ok(v)
    }

    /// `(M, c)` with `v(x) = M x + c`, when the field is known to be affine.
    pub fn affine_parts(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        match self {
            GradientOracle::Affine { matrix, offset } => Some((matrix.clone(), offset.clone())),
            GradientOracle::Quadratic(p) => Some(p.affine_parts()),
            GradientOracle::Custom { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    GaussianIid,
}

/// Additive gradient noise `ξ`. Gaussian draws are i.i.d. `N(0, σ²)` per
/// coordinate, hence conditionally mean zero given any history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            sigma: 0.0,
        }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be finite and >= 0, got {sigma}")));
        }
        Ok(Self {
            kind: NoiseKind::GaussianIid,
            sigma,
        })
    }

    pub fn is_silent(&self) -> bool {
        self.kind == NoiseKind::None
    }
}

/// Source of martingale-difference gradient noise.
///
/// Only [`NoiseModel`] implements this; other conditionally mean-zero
/// sequences can be plugged into custom loops through it.
pub trait MartingaleNoise {
    /// Draw `ξ` into `out`. Returns `false` if no noise was drawn.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> bool;

    /// Upper bound on `E‖ξ‖²_*` in the joint dual norm of `game`.
    fn second_moment_bound(&self, game: &GameSpec) -> f64;
}

impl MartingaleNoise for NoiseModel {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> bool {
        match self.kind {
            NoiseKind::None => false,
            NoiseKind::GaussianIid => {
                for v in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = self.sigma * z;
                }
                true
            }
        }
    }

    fn second_moment_bound(&self, game: &GameSpec) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            // Each block's squared dual norm is at most its squared ℓ2 norm,
            // whose mean is σ² d_i; summing over blocks gives σ² D.
            NoiseKind::GaussianIid => self.sigma * self.sigma * game.total_dim() as f64,
        }
    }
}

/// Output of [`noisy_gradient`].
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyGradient {
    pub value: DVector<f64>,
    pub noise: Option<DVector<f64>>,
}

/// The full game `Γ`: players, action sets, gradient field and resources.
#[derive(Clone, Debug)]
pub struct GameSpec {
    action_sets: Vec<ActionSet>,
    offsets: Vec<usize>,
    gradient: GradientOracle,
    resources: ResourceConstraints,
    noise: NoiseModel,
}

impl GameSpec {
    pub fn new(
        action_sets: Vec<ActionSet>,
        gradient: GradientOracle,
        resources: ResourceConstraints,
        noise: NoiseModel,
    ) -> Result<Self> {
        if action_sets.is_empty() {
            return Err(Error::InvalidGame("a game needs at least one player".into()));
        }
        for s in &action_sets {
            s.validate()?;
        }
        let mut offsets = Vec::with_capacity(action_sets.len() + 1);
        let mut total = 0;
        offsets.push(0);
        for s in &action_sets {
            total += s.dim();
            offsets.push(total);
        }
        check_dim("gradient dimension", total, gradient.dim())?;
        check_dim("resource matrix columns", total, resources.dim())?;
        let game = Self {
            action_sets,
            offsets,
            gradient,
            resources,
            noise,
        };
        if let Some(x) = &game.resources.slater_point {
            if !game.contains(x, 1e-9) {
                return Err(Error::InvalidGame(
                    "Slater witness lies outside the joint action set".into(),
                ));
            }
        }
        Ok(game)
    }

    pub fn n_players(&self) -> usize {
        self.action_sets.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.action_sets.iter().map(ActionSet::dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn n_resources(&self) -> usize {
        self.resources.n_resources()
    }

    pub fn action_sets(&self) -> &[ActionSet] {
        &self.action_sets
    }

    pub fn gradient(&self) -> &GradientOracle {
        &self.gradient
    }

    pub fn resources(&self) -> &ResourceConstraints {
        &self.resources
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Iterator over `(player, block slice)` of a joint vector.
    pub fn blocks<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = (usize, &'a [f64])> + 'a {
        (0..self.n_players()).map(move |i| (i, &x[self.block_range(i)]))
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.total_dim()
            && self
                .blocks(x.as_slice())
                .all(|(i, xi)| self.action_sets[i].contains(xi, tol))
    }

    /// Joint primal norm `sqrt(Σ_i ‖x_i‖²)`.
    pub fn primal_norm(&self, x: &[f64]) -> f64 {
        self.blocks(x)
            .map(|(i, xi)| self.action_sets[i].norm().primal(xi).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Joint dual norm `sqrt(Σ_i ‖y_i‖²_*)`, dual to [`Self::primal_norm`].
    pub fn dual_norm(&self, y: &[f64]) -> f64 {
        self.blocks(y)
            .map(|(i, yi)| self.action_sets[i].norm().dual(yi).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn project(&self, x: &mut DVector<f64>) {
        for i in 0..self.n_players() {
            let r = self.block_range(i);
            self.action_sets[i].project(&mut x.as_mut_slice()[r]);
        }
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let mut x = Vec::with_capacity(self.total_dim());
        for s in &self.action_sets {
            x.extend(s.sample(rng));
        }
        DVector::from_vec(x)
    }

    pub fn barycenter(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.total_dim(),
            self.action_sets.iter().flat_map(ActionSet::barycenter),
        )
    }

    pub fn congestion(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.resources.congestion(x)
    }

    pub fn gradient_at(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.gradient.eval(x)
    }

    /// Joint diameter of `𝒳` in [`Self::primal_norm`].
    pub fn diameter(&self) -> f64 {
        self.action_sets
            .iter()
            .map(|s| s.diameter().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `v̂ = v(x) + ξ` with `ξ` drawn from `noise`. With [`NoiseKind::None`] the
/// RNG is not touched and the exact gradient is returned.
pub fn noisy_gradient<R: Rng + ?Sized>(
    x: &DVector<f64>,
    game: &GameSpec,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<NoisyGradient> {
    let mut value = game.gradient_at(x)?;
    if noise.is_silent() {
        return Ok(NoisyGradient { value, noise: None });
    }
    let mut xi = DVector::zeros(value.len());
    noise.draw(rng, xi.as_mut_slice());
    value += &xi;
    Ok(NoisyGradient {
        value,
        noise: Some(xi),
    })
}

/// Largest `⟨x - x', v(x) - v(x')⟩` over `pairs` uniform samples from `𝒳`.
/// Non-positive values are consistent with a monotone field.
pub fn sampled_monotonicity<R: Rng + ?Sized>(
    game: &GameSpec,
    pairs: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let x = game.sample_point(rng);
        let y = game.sample_point(rng);
        let gap = (&x - &y).dot(&(game.gradient_at(&x)? - game.gradient_at(&y)?));
        worst = worst.max(gap);
    }
    Ok(worst)
}

/// JSON form of a [`GameSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameDocument {
    pub n_players: usize,
    pub dims: Vec<usize>,
    pub action_sets: Vec<ActionSet>,
    /// Resource matrix, one inner array per row.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub noise_kind: NoiseKind,
    #[serde(default)]
    pub sigma: f64,
    pub gradient: GradientDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slater_point: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GradientDocument {
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    Quadratic(QuadGameParams),
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    for r in rows {
        check_dim(what, ncols, r.len())?;
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl GameSpec {
    pub fn to_document(&self) -> Result<GameDocument> {
        let gradient = match &self.gradient {
            GradientOracle::Affine { matrix, offset } => GradientDocument::Affine {
                matrix: matrix_rows(matrix),
                offset: offset.iter().copied().collect(),
            },
            GradientOracle::Quadratic(p) => GradientDocument::Quadratic(p.clone()),
            GradientOracle::Custom { .. } => {
                return Err(Error::Unsupported(
                    "custom gradient oracles cannot be serialized".into(),
                ))
            }
        };
        Ok(GameDocument {
            n_players: self.n_players(),
            dims: self.dims(),
            action_sets: self.action_sets.clone(),
            a: matrix_rows(&self.resources.a),
            b: self.resources.b.iter().copied().collect(),
            noise_kind: self.noise.kind,
            sigma: self.noise.sigma,
            gradient,
            slater_point: self
                .resources
                .slater_point
                .as_ref()
                .map(|x| x.iter().copied().collect()),
        })
    }

    pub fn from_document(doc: &GameDocument) -> Result<Self> {
        check_dim("n_players", doc.n_players, doc.action_sets.len())?;
        check_dim("dims", doc.n_players, doc.dims.len())?;
        for (d, s) in doc.dims.iter().zip(&doc.action_sets) {
            check_dim("action set dimension", *d, s.dim())?;
        }
        let gradient = match &doc.gradient {
            GradientDocument::Affine { matrix, offset } => {
                let matrix = matrix_from_rows(matrix, "gradient matrix row")?;
                check_dim("gradient offset", matrix.nrows(), offset.len())?;
                GradientOracle::Affine {
                    matrix,
                    offset: DVector::from_column_slice(offset),
                }
            }
            GradientDocument::Quadratic(p) => GradientOracle::Quadratic(p.clone()),
        };
        let a = matrix_from_rows(&doc.a, "resource matrix row")?;
        let mut rc = ResourceConstraints::new(a, DVector::from_column_slice(&doc.b))?;
        if let Some(x) = &doc.slater_point {
            rc = rc.with_slater_point(DVector::from_column_slice(x))?;
        }
        let noise = match doc.noise_kind {
            NoiseKind::None => NoiseModel::none(),
            NoiseKind::GaussianIid => NoiseModel::gaussian(doc.sigma)?,
        };
        GameSpec::new(doc.action_sets.clone(), gradient, rc, noise)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document()?)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }
}
