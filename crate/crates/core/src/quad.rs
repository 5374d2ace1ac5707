//! Quadratic task-allocation game.
//!
//! `N` players split a unit of work over `D` resources (simplex actions).
//! Player `i` pays `J_i(x) = ½⟨x_i, Q x_i⟩ + ⟨C σ(x) + c_i, x_i⟩` where
//! `σ(x)` is the population mean. Utilities are `u_i = -J_i`.
//!
//! The benchmark draws `Q = 2·sqrt(Q̃ᵀQ̃) + I` from a seeded standard normal
//! `Q̃` and fixes `C = 4I`, `c = 0`, `A = 4·1ᵀ_N ⊗ I_D`, `b = 16·1_D`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::game::{ActionSet, GameSpec, GradientOracle, NoiseModel, ResourceConstraints};

/// Per-resource capacity of the benchmark configuration.
pub const QUAD_BENCH_CAPACITY: f64 = 16.0;
/// Load every unit of a player's action puts on a resource.
pub const QUAD_BENCH_LOAD: f64 = 4.0;
/// Diagonal of the coupling matrix `C`.
pub const QUAD_BENCH_COUPLING: f64 = 4.0;

/// Eigenvalues of `Q̃ᵀQ̃` below `-ROOT_CLAMP_TOL·max(1, λ_max)` are treated as a
/// failed decomposition rather than roundoff.
const ROOT_CLAMP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "QuadParamsDocument", try_from = "QuadParamsDocument")]
pub struct QuadGameParams {
    pub n_players: usize,
    pub dim: usize,
    pub q: DMatrix<f64>,
    pub cmat: DMatrix<f64>,
    /// Stacked per-player linear terms, length `n_players * dim`.
    pub c: DVector<f64>,
    pub build_seed: u64,
}

/// Serialized form: `Q` is regenerated from `build_seed`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct QuadParamsDocument {
    n_players: usize,
    dim: usize,
    build_seed: u64,
    cmat: Vec<Vec<f64>>,
    c: Vec<f64>,
}

impl From<QuadGameParams> for QuadParamsDocument {
    fn from(p: QuadGameParams) -> Self {
        Self {
            n_players: p.n_players,
            dim: p.dim,
            build_seed: p.build_seed,
            cmat: p.cmat.row_iter().map(|r| r.iter().copied().collect()).collect(),
            c: p.c.iter().copied().collect(),
        }
    }
}

impl TryFrom<QuadParamsDocument> for QuadGameParams {
    type Error = Error;

    fn try_from(doc: QuadParamsDocument) -> Result<Self> {
        let mut p = QuadGameParams::generate(doc.n_players, doc.dim, doc.build_seed)?;
        check_dim("coupling matrix rows", doc.dim, doc.cmat.len())?;
        for row in &doc.cmat {
            check_dim("coupling matrix columns", doc.dim, row.len())?;
        }
        check_dim("linear term", doc.n_players * doc.dim, doc.c.len())?;
        p.cmat = DMatrix::from_fn(doc.dim, doc.dim, |i, j| doc.cmat[i][j]);
        p.c = DVector::from_column_slice(&doc.c);
        Ok(p)
    }
}

/// `sqrt(M)` for a symmetric positive semi-definite `M`.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -ROOT_CLAMP_TOL * scale {
            return Err(Error::InvalidGame(format!(
                "matrix square root of a non-PSD matrix (eigenvalue {v})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let vecs = &eig.eigenvectors;
    let root = vecs * DMatrix::from_diagonal(&roots) * vecs.transpose();
    Ok((&root + root.transpose()) * 0.5)
}

impl QuadGameParams {
    /// Benchmark parameters with a random `Q` drawn from `seed`.
    pub fn generate(n_players: usize, dim: usize, seed: u64) -> Result<Self> {
        if n_players == 0 || dim == 0 {
            return Err(Error::param(
                "n/d",
                format!("need at least one player and one resource, got n={n_players}, d={dim}"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q_tilde = DMatrix::from_fn(dim, dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let gram = q_tilde.transpose() * &q_tilde;
        let q = psd_sqrt(&gram)? * 2.0 + DMatrix::identity(dim, dim);
        Ok(Self {
            n_players,
            dim,
            q,
            cmat: DMatrix::identity(dim, dim) * QUAD_BENCH_COUPLING,
            c: DVector::zeros(n_players * dim),
            build_seed: seed,
        })
    }

    /// Population mean `σ(x)`.
    pub fn mean_action(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut s = DVector::zeros(self.dim);
        for i in 0..self.n_players {
            s += x.rows(i * self.dim, self.dim);
        }
        s / self.n_players as f64
    }

    /// Explicit `(M, c)` with `v(x) = M x - c`, i.e. the Kronecker form
    /// `M = -(I_N ⊗ Q + (1/N) 1 1ᵀ ⊗ C + (1/N) I_N ⊗ Cᵀ)`.
    pub fn affine_parts(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (n, d) = (self.n_players, self.dim);
        let inv_n = 1.0 / n as f64;
        let diag_block = &self.q + self.cmat.transpose() * inv_n;
        let off_block = &self.cmat * inv_n;
        let mut m = DMatrix::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                let mut block = off_block.clone();
                if i == j {
                    block += &diag_block;
                }
                m.view_mut((i * d, j * d), (d, d)).copy_from(&(-block));
            }
        }
        (m, -self.c.clone())
    }
}

/// `v(x)`, evaluated block-wise in `O(N·D²)`:
/// `v_i = -[Q x_i + C σ(x) + c_i + (1/N) Cᵀ x_i]`.
pub fn quad_gradient(x: &DVector<f64>, params: &QuadGameParams) -> Result<DVector<f64>> {
    let (n, d) = (params.n_players, params.dim);
    check_dim("quadratic gradient", n * d, x.len())?;
    let shared = &params.cmat * params.mean_action(x);
    let own = &params.q + params.cmat.transpose() / n as f64;
    let mut v = DVector::zeros(n * d);
    for i in 0..n {
        let xi = x.rows(i * d, d);
        let block = &own * xi + &shared + params.c.rows(i * d, d);
        v.rows_mut(i * d, d).copy_from(&(-block));
    }
    Ok(v)
}

/// Cost `J_i(x)` of player `i`.
pub fn quad_cost(i: usize, x: &DVector<f64>, params: &QuadGameParams) -> Result<f64> {
    let (n, d) = (params.n_players, params.dim);
    check_dim("quadratic cost", n * d, x.len())?;
    if i >= n {
        return Err(Error::OutOfRange { index: i, len: n });
    }
    let xi = x.rows(i * d, d);
    let linear = &params.cmat * params.mean_action(x) + params.c.rows(i * d, d);
    Ok(0.5 * xi.dot(&(&params.q * xi)) + linear.dot(&xi))
}

/// The benchmark game with `N = n` players on `d`-simplices over `d`
/// resources, `A = 4·1ᵀ_N ⊗ I_d` and `b = 16·1_d`.
pub fn make_quadratic_game(n: usize, d: usize, seed: u64) -> Result<GameSpec> {
    make_quadratic_game_with_capacity(n, d, seed, QUAD_BENCH_CAPACITY)
}

/// Same construction with a custom per-resource capacity `b = capacity·1`.
pub fn make_quadratic_game_with_capacity(
    n: usize,
    d: usize,
    seed: u64,
    capacity: f64,
) -> Result<GameSpec> {
    let params = QuadGameParams::generate(n, d, seed)?;
    let a = DMatrix::from_fn(d, n * d, |r, col| {
        if col % d == r {
            QUAD_BENCH_LOAD
        } else {
            0.0
        }
    });
    let rc = ResourceConstraints::new(a, DVector::from_element(d, capacity))?;
    GameSpec::new(
        vec![ActionSet::simplex(d); n],
        GradientOracle::Quadratic(params),
        rc,
        NoiseModel::none(),
    )
}
