//! Experiment sweeps: seeds × sweep values × horizons, run in parallel,
//! written as per-cell trajectory files plus per-horizon summaries.
//!
//! Output layout under `output`:
//!
//! ```text
//! constants.json
//! trackability.csv
//! summary_T{T}.csv
//! trajectories/T{T}/{param}_{value}/seed_{k}.csv|json
//! manifest.json
//! ```
//!
//! Seed `k` of a sweep is `splitmix64(seed + k)`, shared by every sweep value
//! and horizon so that cells differ only in the swept parameter.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run, SimConfig, Trajectory};
use crate::error::{Error, Result};
use crate::game::{GameDocument, GameSpec, NoiseModel};
use crate::metrics::{anccvc_series, decay_fit};
use crate::mirror::Regularizer;
use crate::pricing::{Schedule, ScheduleSet};
use crate::quad::{make_quadratic_game, make_quadratic_game_with_capacity};
use crate::theory::{
    compute_constants, solve_constrained_vi, theorem1_bound, trackability_check, GameConstants,
    VISolution,
};

/// `seed + index` pushed through the SplitMix64 finalizer.
pub fn split_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSource {
    QuadBench {
        n_players: usize,
        dim: usize,
        build_seed: u64,
        /// Per-resource capacity; the benchmark's `4N/D` when absent.
        #[serde(default)]
        capacity: Option<f64>,
    },
    Inline(Box<GameDocument>),
}

impl GameSource {
    pub fn build(&self) -> Result<GameSpec> {
        match self {
            GameSource::QuadBench {
                n_players,
                dim,
                build_seed,
                capacity: None,
            } => make_quadratic_game(*n_players, *dim, *build_seed),
            GameSource::QuadBench {
                n_players,
                dim,
                build_seed,
                capacity: Some(cap),
            } => make_quadratic_game_with_capacity(*n_players, *dim, *build_seed, *cap),
            GameSource::Inline(doc) => GameSpec::from_document(doc),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSpec {
    /// Constant `scale / sqrt(T)` over a run of horizon `T`.
    HorizonScaled { scale: f64 },
    Schedule(Schedule),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaSpec {
    /// `ζ ≡ γ`.
    Gamma,
    Schedule(Schedule),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSpec {
    /// `η = α γ²`.
    Alpha { alpha: f64 },
    Schedule(Schedule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Beta,
    Alpha,
    GammaScale,
    Sigma,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Alpha => "alpha",
            SweepParam::GammaScale => "gamma_scale",
            SweepParam::Sigma => "sigma",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(SweepParam::Beta),
            "alpha" => Ok(SweepParam::Alpha),
            "gamma_scale" => Ok(SweepParam::GammaScale),
            "sigma" => Ok(SweepParam::Sigma),
            other => Err(Error::param(
                "sweep",
                format!("unknown parameter {other:?}; expected beta, alpha, gamma_scale or sigma"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    #[default]
    Csv,
    Json,
    Both,
}

impl Emit {
    fn csv(self) -> bool {
        matches!(self, Emit::Csv | Emit::Both)
    }

    fn json(self) -> bool {
        matches!(self, Emit::Json | Emit::Both)
    }
}

impl std::str::FromStr for Emit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Emit::Csv),
            "json" => Ok(Emit::Json),
            "both" => Ok(Emit::Both),
            other => Err(Error::param("format", format!("expected csv, json or both, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSource,
    pub horizons: Vec<usize>,
    pub seed: u64,
    pub n_seeds: usize,
    pub sigma: f64,
    pub gamma: GammaSpec,
    pub zeta: ZetaSpec,
    pub eta: EtaSpec,
    pub beta: f64,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Multiplier bound for the violation bound; solved from the game when
    /// absent and needed.
    #[serde(default)]
    pub c_tilde2: Option<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub emit: Emit,
}

impl Default for ExperimentConfig {
    /// The benchmark setting: twenty players on five resources, `T = 500`,
    /// `γ = 0.5/√T`, `η = 10γ²`, `β = 2`, `σ = 5`.
    fn default() -> Self {
        Self {
            game: GameSource::QuadBench {
                n_players: 20,
                dim: 5,
                build_seed: 0,
                capacity: None,
            },
            horizons: vec![500],
            seed: 0,
            n_seeds: 10,
            sigma: 5.0,
            gamma: GammaSpec::HorizonScaled { scale: 0.5 },
            zeta: ZetaSpec::Gamma,
            eta: EtaSpec::Alpha { alpha: 10.0 },
            beta: 2.0,
            sweep: None,
            c_tilde2: None,
            output: None,
            emit: Emit::Csv,
        }
    }
}

/// Parameters of one sweep value.
#[derive(Clone, Debug, PartialEq)]
struct CellParams {
    gamma: GammaSpec,
    eta: EtaSpec,
    beta: f64,
    sigma: f64,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::param("horizons", "need at least one positive horizon"));
        }
        if self.n_seeds == 0 {
            return Err(Error::param("n_seeds", "must be at least 1"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::param("sweep", "no values"));
            }
            if sweep.param == SweepParam::GammaScale
                && !matches!(self.gamma, GammaSpec::HorizonScaled { .. })
            {
                return Err(Error::param("sweep", "gamma_scale needs a horizon-scaled gamma"));
            }
        }
        for (_, params) in self.cells() {
            for &t in &self.horizons {
                self.schedules(&params, t).validate(t)?;
            }
            NoiseModel::gaussian(params.sigma)?;
        }
        Ok(())
    }

    /// `(label value, parameters)` per sweep value; one unlabeled cell
    /// without a sweep.
    fn cells(&self) -> Vec<(Option<f64>, CellParams)> {
        let base = CellParams {
            gamma: self.gamma.clone(),
            eta: self.eta.clone(),
            beta: self.beta,
            sigma: self.sigma,
        };
        let Some(sweep) = &self.sweep else {
            return vec![(None, base)];
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut p = base.clone();
                match sweep.param {
                    SweepParam::Beta => p.beta = v,
                    SweepParam::Alpha => p.eta = EtaSpec::Alpha { alpha: v },
                    SweepParam::GammaScale => p.gamma = GammaSpec::HorizonScaled { scale: v },
                    SweepParam::Sigma => p.sigma = v,
                }
                (Some(v), p)
            })
            .collect()
    }

    fn schedules(&self, p: &CellParams, horizon: usize) -> ScheduleSet {
        let gamma = match &p.gamma {
            GammaSpec::HorizonScaled { scale } => Schedule::constant(scale / (horizon as f64).sqrt()),
            GammaSpec::Schedule(s) => *s,
        };
        let zeta = match &self.zeta {
            ZetaSpec::Gamma => gamma,
            ZetaSpec::Schedule(s) => *s,
        };
        let eta = match &p.eta {
            EtaSpec::Alpha { alpha } => gamma.scaled_square(*alpha),
            EtaSpec::Schedule(s) => *s,
        };
        ScheduleSet {
            gamma,
            zeta,
            eta,
            beta: Schedule::constant(p.beta),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|k| split_seed(self.seed, k)).collect()
    }

    fn sweep_name(&self) -> &'static str {
        self.sweep.as_ref().map_or("none", |s| s.param.name())
    }
}

fn value_label(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

/// First step at which the trackability condition fails, if any.
fn first_tc_failure(schedules: &ScheduleSet, horizon: usize, consts: &GameConstants) -> Option<usize> {
    if schedules.gamma.is_constant() && schedules.eta.is_constant() {
        let p = schedules.at_step(0);
        return (!trackability_check(p.gamma, p.eta, consts)).then_some(0);
    }
    (0..horizon).find(|&tau| {
        let p = schedules.at_step(tau);
        !trackability_check(p.gamma, p.eta, consts)
    })
}

/// Outcome of one (sweep value, horizon, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub sweep_param: String,
    pub value: String,
    pub horizon: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub terminal_anccvc: f64,
    pub tc_satisfied: bool,
    pub bound_value: Option<f64>,
}

/// Trackability verdict of one (sweep value, horizon) schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackabilityRow {
    pub sweep_param: String,
    pub value: String,
    pub horizon: usize,
    pub gamma_0: f64,
    pub eta_0: f64,
    pub tc_satisfied: bool,
    pub first_failing_step: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub constants: GameConstants,
    pub vi_solution: Option<VISolution>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub cells: Vec<CellResult>,
    pub trackability: Vec<TrackabilityRow>,
    pub constants: ConstantsReport,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    /// Mean terminal ANCCVC per (value label, horizon), in sweep order.
    pub fn means(&self) -> Vec<(String, usize, f64)> {
        let mut out: Vec<(String, usize, f64)> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for c in &self.cells {
            match out.iter().position(|(v, h, _)| *v == c.value && *h == c.horizon) {
                Some(i) => {
                    out[i].2 += c.terminal_anccvc;
                    counts[i] += 1;
                }
                None => {
                    out.push((c.value.clone(), c.horizon, c.terminal_anccvc));
                    counts.push(1);
                }
            }
        }
        for (row, n) in out.iter_mut().zip(counts) {
            row.2 /= n as f64;
        }
        out
    }
}

fn write_trajectory_csv(path: &Path, traj: &Trajectory, series: &[f64]) -> Result<()> {
    let r = traj.n_resources();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string(), "anccvc".to_string()];
    header.extend((1..=r).map(|k| format!("price_r{k}")));
    header.extend((1..=r).map(|k| format!("phi_r{k}")));
    w.write_record(&header)?;
    for (t, value) in (1..=traj.len()).zip(series) {
        // Price after the update of step t, congestion of step t.
        let price = traj
            .records
            .get(t)
            .map_or(&traj.final_state.prices.prices, |rec| &rec.prices);
        let mut row = vec![t.to_string(), value.to_string()];
        row.extend(price.iter().map(f64::to_string));
        row.extend(traj.records[t - 1].congestion.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryJson<'a> {
    seed: u64,
    anccvc: &'a [f64],
    prices: Vec<Vec<f64>>,
    congestion: Vec<Vec<f64>>,
}

fn write_trajectory_json(path: &Path, traj: &Trajectory, series: &[f64]) -> Result<()> {
    let prices = (1..=traj.len())
        .map(|t| {
            traj.records
                .get(t)
                .map_or(&traj.final_state.prices.prices, |rec| &rec.prices)
                .iter()
                .copied()
                .collect()
        })
        .collect();
    let congestion = traj
        .congestions()
        .map(|p| p.iter().copied().collect())
        .collect();
    let doc = TrajectoryJson {
        seed: traj.seed,
        anccvc: series,
        prices,
        congestion,
    };
    fs::write(path, serde_json::to_string(&doc)?)?;
    Ok(())
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Runs every (sweep value, horizon, seed) cell and, when `output` is set,
/// writes the report files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let base_game = cfg.game.build()?;
    let regs: Vec<Regularizer> = base_game
        .action_sets()
        .iter()
        .map(Regularizer::for_action_set)
        .collect();
    let mut constants = compute_constants(&base_game.clone().with_noise(NoiseModel::gaussian(cfg.sigma)?), &regs)?;
    let cells = cfg.cells();
    let sweep_name = cfg.sweep_name();

    // Trackability per (value, horizon); the bound only where it holds.
    let mut tracks = Vec::new();
    for (label, params) in &cells {
        for &h in &cfg.horizons {
            let s = cfg.schedules(params, h);
            let fail = first_tc_failure(&s, h, &constants);
            let p0 = s.at_step(0);
            tracks.push(TrackabilityRow {
                sweep_param: sweep_name.to_string(),
                value: value_label(*label),
                horizon: h,
                gamma_0: p0.gamma,
                eta_0: p0.eta,
                tc_satisfied: fail.is_none(),
                first_failing_step: fail,
            });
        }
    }
    let needs_bound = cells.iter().any(|(_, p)| p.beta == 2.0)
        && tracks.iter().any(|t| t.tc_satisfied);
    let mut vi_solution = None;
    if let Some(c) = cfg.c_tilde2 {
        constants = constants.with_c_tilde2(c);
    } else if needs_bound {
        let sol = solve_constrained_vi(&base_game, 1e-8, 2_000_000)?;
        constants = constants.with_multipliers(&sol);
        vi_solution = Some(sol);
    }

    let seeds = cfg.seeds();
    let (n_h, n_s) = (cfg.horizons.len(), seeds.len());
    let jobs: Vec<(usize, usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..n_h).flat_map(move |h| (0..n_s).map(move |k| (c, h, k))))
        .collect();
    let games: Vec<Arc<GameSpec>> = cells
        .iter()
        .map(|(_, p)| Ok(Arc::new(base_game.clone().with_noise(noise_for(p.sigma)?))))
        .collect::<Result<_>>()?;

    if let Some(out) = &cfg.output {
        fs::create_dir_all(out)?;
    }
    let results: Vec<(CellResult, Vec<PathBuf>)> = jobs
        .par_iter()
        .map(|&(c, h, k)| {
            let (label, params) = &cells[c];
            let horizon = cfg.horizons[h];
            let schedules = cfg.schedules(params, horizon);
            let sim = SimConfig::new(games[c].clone(), schedules, horizon, seeds[k]);
            let traj = run(&sim)?;
            let series = anccvc_series(&traj);
            let track = &tracks[c * cfg.horizons.len() + h];
            let sigma2 = params.sigma * params.sigma * base_game.total_dim() as f64;
            let bound = if track.tc_satisfied && constants.c_tilde2.is_some() {
                theorem1_bound(horizon, &schedules, &constants, |_| sigma2).ok()
            } else {
                None
            };
            let mut files = Vec::new();
            if let Some(out) = &cfg.output {
                let dir = out
                    .join("trajectories")
                    .join(format!("T{horizon}"))
                    .join(format!("{sweep_name}_{}", value_label(*label)));
                fs::create_dir_all(&dir)?;
                if cfg.emit.csv() {
                    let p = dir.join(format!("seed_{k}.csv"));
                    write_trajectory_csv(&p, &traj, &series)?;
                    files.push(p);
                }
                if cfg.emit.json() {
                    let p = dir.join(format!("seed_{k}.json"));
                    write_trajectory_json(&p, &traj, &series)?;
                    files.push(p);
                }
            }
            Ok((
                CellResult {
                    sweep_param: sweep_name.to_string(),
                    value: value_label(*label),
                    horizon,
                    seed_index: k,
                    seed: seeds[k],
                    terminal_anccvc: *series.last().expect("horizon is positive"),
                    tc_satisfied: track.tc_satisfied,
                    bound_value: bound,
                },
                files,
            ))
        })
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport {
        cells: Vec::with_capacity(results.len()),
        trackability: tracks,
        constants: ConstantsReport {
            constants,
            vi_solution,
        },
        files: Vec::new(),
    };
    for (cell, files) in results {
        report.cells.push(cell);
        report.files.extend(files);
    }
    if let Some(out) = &cfg.output {
        write_reports(out, cfg, &mut report)?;
    }
    Ok(report)
}

fn noise_for(sigma: f64) -> Result<NoiseModel> {
    if sigma == 0.0 {
        Ok(NoiseModel::none())
    } else {
        NoiseModel::gaussian(sigma)
    }
}

fn write_reports(out: &Path, cfg: &ExperimentConfig, report: &mut ExperimentReport) -> Result<()> {
    let constants = out.join("constants.json");
    fs::write(&constants, serde_json::to_string_pretty(&report.constants)?)?;
    report.files.push(constants);

    let track = out.join("trackability.csv");
    let mut w = csv::Writer::from_path(&track)?;
    w.write_record([
        "sweep_param",
        "value",
        "horizon",
        "gamma_0",
        "eta_0",
        "tc_satisfied",
        "first_failing_step",
    ])?;
    for r in &report.trackability {
        w.write_record([
            r.sweep_param.clone(),
            r.value.clone(),
            r.horizon.to_string(),
            r.gamma_0.to_string(),
            r.eta_0.to_string(),
            r.tc_satisfied.to_string(),
            fmt_opt(r.first_failing_step),
        ])?;
    }
    w.flush()?;
    report.files.push(track);

    for &h in &cfg.horizons {
        let path = out.join(format!("summary_T{h}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(SUMMARY_HEADER)?;
        for c in report.cells.iter().filter(|c| c.horizon == h) {
            w.write_record([
                c.sweep_param.clone(),
                c.value.clone(),
                c.seed.to_string(),
                c.terminal_anccvc.to_string(),
                c.tc_satisfied.to_string(),
                fmt_opt(c.bound_value),
            ])?;
        }
        w.flush()?;
        report.files.push(path);
    }

    let manifest = Manifest {
        config: cfg.clone(),
        seeds: cfg.seeds(),
        files: report
            .files
            .iter()
            .map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string())
            .collect(),
    };
    let path = out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    report.files.push(path);
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 6] = [
    "sweep_param",
    "value",
    "seed",
    "terminal_anccvc",
    "tc_satisfied",
    "bound_value",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep_param: String,
    pub value: String,
    pub horizon: usize,
    pub n_seeds: usize,
    pub mean: f64,
    /// Sample standard deviation, zero for a single seed.
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub sweep_param: String,
    pub value: String,
    pub slope: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub slopes: Vec<SlopeRow>,
}

impl SummaryTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sweep_param", "value", "horizon", "n_seeds", "mean", "std", "slope"])?;
        for r in &self.rows {
            let slope = self
                .slopes
                .iter()
                .find(|s| s.sweep_param == r.sweep_param && s.value == r.value)
                .map(|s| s.slope);
            w.write_record([
                r.sweep_param.clone(),
                r.value.clone(),
                r.horizon.to_string(),
                r.n_seeds.to_string(),
                r.mean.to_string(),
                r.std.to_string(),
                fmt_opt(slope),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

fn horizon_of(path: &Path) -> Option<usize> {
    path.file_name()?
        .to_str()?
        .strip_prefix("summary_T")?
        .strip_suffix(".csv")?
        .parse()
        .ok()
}

/// Mean and spread of terminal ANCCVC per sweep value and horizon, plus the
/// log-log slope across horizons where at least three are present.
pub fn summarize(dir: &Path) -> Result<SummaryTable> {
    let mut files: Vec<(usize, PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| horizon_of(&p).map(|h| (h, p)))
        .collect();
    if files.is_empty() {
        return Err(Error::CorruptReport(format!(
            "no summary_T*.csv files in {}",
            dir.display()
        )));
    }
    files.sort();
    // (param, value) in first-seen order -> horizon -> values
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (h, path) in &files {
        let mut r = csv::Reader::from_path(path)?;
        if r.headers()?.iter().ne(SUMMARY_HEADER) {
            return Err(Error::CorruptReport(format!("{}: unexpected header", path.display())));
        }
        for rec in r.records() {
            let rec = rec?;
            let key = (rec[0].to_string(), rec[1].to_string());
            let value: f64 = rec[3].parse().map_err(|_| {
                Error::CorruptReport(format!("{}: bad terminal_anccvc {:?}", path.display(), &rec[3]))
            })?;
            let idx = match order.iter().position(|k| *k == key) {
                Some(i) => i,
                None => {
                    order.push(key);
                    order.len() - 1
                }
            };
            groups.entry((idx, *h)).or_default().push(value);
        }
    }
    let mut table = SummaryTable::default();
    for (idx, (param, value)) in order.iter().enumerate() {
        let mut horizons = Vec::new();
        let mut means = Vec::new();
        for ((_, h), vals) in groups.range((idx, 0)..=(idx, usize::MAX)) {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            table.rows.push(SummaryRow {
                sweep_param: param.clone(),
                value: value.clone(),
                horizon: *h,
                n_seeds: vals.len(),
                mean,
                std,
            });
            horizons.push(*h as f64);
            means.push(mean);
        }
        if let Ok(slope) = decay_fit(&horizons, &means) {
            table.slopes.push(SlopeRow {
                sweep_param: param.clone(),
                value: value.clone(),
                slope,
            });
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(out: Option<PathBuf>) -> ExperimentConfig {
        ExperimentConfig {
            horizons: vec![10],
            n_seeds: 1,
            sweep: Some(Sweep {
                param: SweepParam::Beta,
                values: vec![0.0, 2.0],
            }),
            output: out,
            ..Default::default()
        }
    }

    #[test]
    fn seed_splitting_is_stable_and_distinct() {
        assert_eq!(split_seed(0, 0), 0xe220_a839_7b1d_cdaf);
        let s: Vec<u64> = (0..100).map(|k| split_seed(7, k)).collect();
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 100);
        assert_eq!(split_seed(7, 3), split_seed(8, 2));
    }

    #[test]
    fn beta_sweep_writes_one_file_and_row_per_cell() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&small(Some(dir.path().to_path_buf()))).unwrap();
        assert_eq!(report.cells.len(), 2);
        for v in ["0", "2"] {
            let p = dir.path().join(format!("trajectories/T10/beta_{v}/seed_0.csv"));
            let text = fs::read_to_string(&p).unwrap();
            let mut lines = text.lines();
            assert_eq!(
                lines.next().unwrap(),
                "t,anccvc,price_r1,price_r2,price_r3,price_r4,price_r5,phi_r1,phi_r2,phi_r3,phi_r4,phi_r5"
            );
            assert_eq!(lines.count(), 10);
        }
        let summary = fs::read_to_string(dir.path().join("summary_T10.csv")).unwrap();
        let mut lines = summary.lines();
        assert_eq!(
            lines.next().unwrap(),
            "sweep_param,value,seed,terminal_anccvc,tc_satisfied,bound_value"
        );
        assert_eq!(lines.count(), 2);
        assert!(dir.path().join("trackability.csv").exists());
        assert!(dir.path().join("constants.json").exists());
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn trajectory_csv_matches_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Some(dir.path().to_path_buf()));
        cfg.sweep = None;
        run_experiment(&cfg).unwrap();
        let game = Arc::new(cfg.game.build().unwrap().with_noise(NoiseModel::gaussian(5.0).unwrap()));
        let s = cfg.schedules(&cfg.cells()[0].1, 10);
        let traj = run(&SimConfig::new(game, s, 10, split_seed(0, 0))).unwrap();
        let series = anccvc_series(&traj);
        let mut r = csv::Reader::from_path(dir.path().join("trajectories/T10/none_/seed_0.csv")).unwrap();
        for (t, rec) in r.records().enumerate() {
            let rec = rec.unwrap();
            assert_eq!(rec[0].parse::<usize>().unwrap(), t + 1);
            assert_eq!(rec[1].parse::<f64>().unwrap(), series[t]);
            let price = if t + 1 < 10 {
                &traj.records[t + 1].prices
            } else {
                &traj.final_state.prices.prices
            };
            assert_eq!(rec[2].parse::<f64>().unwrap(), price[0]);
            assert_eq!(rec[7].parse::<f64>().unwrap(), traj.records[t].congestion[0]);
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut cfg = small(Some(a.path().to_path_buf()));
        cfg.n_seeds = 3;
        cfg.emit = Emit::Both;
        let ra = run_experiment(&cfg).unwrap();
        cfg.output = Some(b.path().to_path_buf());
        run_experiment(&cfg).unwrap();
        for f in &ra.files {
            let rel = f.strip_prefix(a.path()).unwrap();
            if rel.ends_with("manifest.json") {
                continue;
            }
            assert_eq!(fs::read(f).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{rel:?}");
        }
    }

    #[test]
    fn benchmark_setting_is_not_trackable_and_carries_no_bound() {
        let cfg = ExperimentConfig {
            n_seeds: 1,
            ..Default::default()
        };
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert!(report.cells[0].terminal_anccvc.is_finite());
        assert!(!report.trackability[0].tc_satisfied);
        assert_eq!(report.cells[0].bound_value, None);
    }

    #[test]
    fn summarize_means_and_spread() {
        let dir = tempfile::tempdir().unwrap();
        let write = |h: usize, rows: &[(&str, f64)]| {
            let mut w = csv::Writer::from_path(dir.path().join(format!("summary_T{h}.csv"))).unwrap();
            w.write_record(SUMMARY_HEADER).unwrap();
            for (i, (v, a)) in rows.iter().enumerate() {
                w.write_record(["beta", v, &i.to_string(), &a.to_string(), "false", ""]).unwrap();
            }
        };
        write(100, &[("2", 0.3), ("2", 0.5), ("0", 1.25)]);
        write(200, &[("2", 0.2), ("0", 1.0)]);
        write(400, &[("2", 0.1), ("0", 0.5)]);
        let t = summarize(dir.path()).unwrap();
        let r = t.rows.iter().find(|r| r.value == "2" && r.horizon == 100).unwrap();
        assert!((r.mean - 0.4).abs() < 1e-15);
        assert!((r.std - 0.02f64.sqrt()).abs() < 1e-15);
        let single = t.rows.iter().find(|r| r.value == "0" && r.horizon == 200).unwrap();
        assert_eq!((single.mean, single.std), (1.0, 0.0));
        let slope = t.slopes.iter().find(|s| s.value == "0").unwrap().slope;
        assert_eq!(slope, decay_fit(&[100.0, 200.0, 400.0], &[1.25, 1.0, 0.5]).unwrap());
        assert!(t.to_csv().unwrap().starts_with("sweep_param,value,horizon,n_seeds,mean,std,slope\n"));
    }

    #[test]
    fn summarize_rejects_missing_and_corrupt_reports() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(summarize(dir.path()), Err(Error::CorruptReport(_))));
        fs::write(dir.path().join("summary_T5.csv"), "a,b\n1,2\n").unwrap();
        assert!(matches!(summarize(dir.path()), Err(Error::CorruptReport(_))));
        assert!(summarize(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn invalid_sweeps_are_rejected() {
        let mut cfg = small(None);
        cfg.sweep = Some(Sweep {
            param: SweepParam::Sigma,
            values: vec![-1.0],
        });
        assert!(run_experiment(&cfg).is_err());
        cfg.sweep = Some(Sweep {
            param: SweepParam::Alpha,
            values: vec![],
        });
        assert!(run_experiment(&cfg).is_err());
        assert!("gamma".parse::<SweepParam>().is_err());
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = small(Some("out".into()));
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
