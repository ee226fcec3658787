//! Step size × initial scale grids of GD runs from random starts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::init::{random_init, InitLaw};
use crate::error::{Error, Result};
use crate::summary::{regime, thresholds};
use crate::verify::trajectory::{simulate, RunStatus};
use crate::{HyperParams, HyperParamsF64, ParamStateF64};

/// Environment variable capping the sweep worker pool.
pub const THREADS_ENV: &str = "GDB_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EtaGrid {
    /// The same step sizes at every initial scale.
    Fixed(Vec<f64>),
    /// `n` log-spaced values from `lo` to `c/λ₀`.
    LogToInverseScale { lo: f64, c: f64, n: usize },
}

impl EtaGrid {
    pub fn values(&self, lambda0: f64) -> Vec<f64> {
        match self {
            EtaGrid::Fixed(v) => v.clone(),
            EtaGrid::LogToInverseScale { lo, c, n } => log_space(*lo, c / lambda0, *n),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            EtaGrid::Fixed(v) => v.len(),
            EtaGrid::LogToInverseScale { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `n` points from `lo` to `hi`, evenly spaced in `ln`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (l0, l1) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    _ if i == n - 1 => hi,
                    _ => (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

/// `n` points from `lo` to `hi`, evenly spaced.
pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub eta_grid: EtaGrid,
    pub scale_grid: Vec<f64>,
    pub phi: f64,
    pub d: usize,
    pub seeds: Vec<u64>,
    pub delta: f64,
    pub max_steps: usize,
    pub law: InitLaw,
}

impl SweepConfig {
    /// 32 step sizes log-spaced on `[0.01, 2.5/λ₀]`, 16 scales on `[2Φ, 20Φ]`, seeds `0..20`.
    pub fn default_grid(phi: f64, d: usize) -> Self {
        Self {
            eta_grid: EtaGrid::LogToInverseScale { lo: 0.01, c: 2.5, n: 32 },
            scale_grid: lin_space(2.0 * phi, 20.0 * phi, 16),
            phi,
            d,
            seeds: (0..20).collect(),
            delta: 1e-8,
            max_steps: crate::verify::trajectory::DEFAULT_MAX_STEPS,
            law: InitLaw::GaussianBalancedFree,
        }
    }

    pub fn cells(&self) -> usize {
        self.eta_grid.len() * self.scale_grid.len() * self.seeds.len()
    }
}

/// One GD run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta: f64,
    pub lambda0: f64,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(rename = "T")]
    pub steps: usize,
    #[serde(rename = "Q_ratio")]
    pub q_ratio: f64,
    pub final_lambda: f64,
    pub tau: usize,
    #[serde(rename = "Q_at_tau")]
    pub q_at_tau: f64,
    pub regime_label: String,
    /// Some step had `η|ε(t)| ≥ 1`.
    pub chaotic: bool,
    /// Per-coordinate `|Qᵢ(T)|/|Qᵢ(0)|`, `;`-separated.
    #[serde(rename = "Q_ratio_coords")]
    pub q_ratio_coords: String,
}

impl SweepRow {
    /// Converged without any step at `η|ε| ≥ 1`.
    pub fn is_stable(&self) -> bool {
        self.status == RunStatus::Converged && !self.chaotic
    }
}

/// Column order of [`SweepRow`] in CSV output.
pub const SWEEP_COLUMNS: [&str; 12] = [
    "eta",
    "lambda0",
    "seed",
    "status",
    "T",
    "Q_ratio",
    "final_lambda",
    "tau",
    "Q_at_tau",
    "regime_label",
    "chaotic",
    "Q_ratio_coords",
];

fn ratio(now: f64, start: f64) -> f64 {
    if start == 0.0 {
        1.0
    } else {
        now / start
    }
}

/// Runs one grid cell.
pub fn run_cell(cfg: &SweepConfig, eta: f64, lambda0: f64, seed: u64) -> Result<SweepRow> {
    let hp = HyperParams::new(cfg.phi, eta)?;
    let init = random_init(cfg.d, lambda0, cfg.law, seed)?;
    let mut row = row_from_state(&init, &hp, cfg.delta, cfg.max_steps, seed);
    // The grid value, not the rescaled λ(0), which can differ in the last bit.
    row.lambda0 = lambda0;
    Ok(row)
}

/// One sweep row for an explicit start; `lambda0` is taken from `init`.
pub fn row_from_state(init: &ParamStateF64, hp: &HyperParamsF64, delta: f64, max_steps: usize, seed: u64) -> SweepRow {
    let (phi, eta) = (hp.phi, hp.eta);
    let s0 = crate::summarize(init, phi);
    let label = regime(eta, &thresholds(&s0, s0.scale(), phi));

    let mut min_scale = f64::INFINITY;
    let mut tau = 0;
    let mut q_at_tau = 0.0;
    let mut chaotic = false;
    let mut last = s0.clone();
    let (status, steps) = simulate(init, hp, delta, max_steps, |t, _, s| {
        if s.scale() < min_scale {
            min_scale = s.scale();
            tau = t;
            q_at_tau = s.total_imbalance();
        }
        chaotic |= eta * s.residual().abs() >= 1.0;
        last = s.clone();
    });
    let coords = s0
        .imbalances()
        .iter()
        .zip(last.imbalances())
        .map(|(q0, q)| ratio(q.abs(), q0.abs()).to_string())
        .collect::<Vec<_>>()
        .join(";");
    SweepRow {
        eta,
        lambda0: s0.scale(),
        seed,
        status,
        steps,
        q_ratio: ratio(last.total_imbalance(), s0.total_imbalance()),
        final_lambda: last.scale(),
        tau,
        q_at_tau,
        regime_label: label.as_str().into(),
        chaotic,
        q_ratio_coords: coords,
    }
}

/// Runs the grid in parallel; rows are ordered by (λ₀ index, η index, seed index).
///
/// The worker pool size is capped by `GDB_THREADS` when set.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.eta_grid.is_empty() || cfg.scale_grid.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::InvalidHyper("sweep grids must be non-empty".into()));
    }
    let mut cells = Vec::with_capacity(cfg.cells());
    for &lambda0 in &cfg.scale_grid {
        for eta in cfg.eta_grid.values(lambda0) {
            for &seed in &cfg.seeds {
                cells.push((eta, lambda0, seed));
            }
        }
    }
    with_worker_pool(|| cells.par_iter().map(|&(eta, l0, seed)| run_cell(cfg, eta, l0, seed)).collect())?
}

/// Runs `work` on a pool of `GDB_THREADS` workers when the variable is set,
/// on the global pool otherwise.
pub fn with_worker_pool<R: Send>(work: impl FnOnce() -> R + Send) -> Result<R> {
    match threads_from_env()? {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Io(e.to_string()))?
            .install(work)),
        None => Ok(work()),
    }
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidHyper(format!("{THREADS_ENV}={v} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

/// Average ranks (ties share the mean rank), 1-based.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` with fewer than two points or a constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Shape statistics over the stable rows of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub lambda0: Vec<f64>,
    /// `mean_q_ratio[l][e]` over stable rows of scale `l`, step `e`; `None` if no stable row.
    pub mean_q_ratio: Vec<Vec<Option<f64>>>,
    /// Per scale: adjacent defined step pairs whose mean does not strictly decrease.
    pub monotone_violations: Vec<usize>,
    pub stable_rows: usize,
    pub chaotic_rows: usize,
    /// Spearman correlation of `T` against `Q_ratio` over stable rows.
    pub spearman_t_qratio: Option<f64>,
    /// Mean over `(η, λ₀)` cells of the same correlation across seeds, where
    /// defined. This holds the step size fixed; the pooled value above mostly
    /// reflects `η`, which lowers both `T` and `Q_ratio`.
    pub within_cell_spearman: Option<f64>,
}

impl SweepStats {
    pub fn total_violations(&self) -> usize {
        self.monotone_violations.iter().sum()
    }
}

/// Rows must be in [`sweep`] order.
pub fn sweep_stats(cfg: &SweepConfig, rows: &[SweepRow]) -> SweepStats {
    let (ne, ns) = (cfg.eta_grid.len(), cfg.seeds.len());
    let mut mean_q_ratio = Vec::new();
    let mut monotone_violations = Vec::new();
    let mut cell_rho = Vec::new();
    for (l, chunk) in rows.chunks(ne * ns).enumerate().take(cfg.scale_grid.len()) {
        let means: Vec<Option<f64>> = chunk
            .chunks(ns)
            .map(|cell| {
                let stable: Vec<f64> = cell.iter().filter(|r| r.is_stable()).map(|r| r.q_ratio).collect();
                (!stable.is_empty()).then(|| stable.iter().sum::<f64>() / stable.len() as f64)
            })
            .collect();
        for cell in chunk.chunks(ns) {
            let (t, q): (Vec<f64>, Vec<f64>) =
                cell.iter().filter(|r| r.is_stable()).map(|r| (r.steps as f64, r.q_ratio)).unzip();
            cell_rho.extend(spearman(&t, &q));
        }
        let defined: Vec<f64> = means.iter().flatten().copied().collect();
        monotone_violations.push(defined.windows(2).filter(|w| !(w[1] < w[0])).count());
        mean_q_ratio.push(means);
        debug_assert!(chunk.iter().all(|r| r.lambda0 == cfg.scale_grid[l]));
    }
    let stable: Vec<&SweepRow> = rows.iter().filter(|r| r.is_stable()).collect();
    let t: Vec<f64> = stable.iter().map(|r| r.steps as f64).collect();
    let q: Vec<f64> = stable.iter().map(|r| r.q_ratio).collect();
    SweepStats {
        lambda0: cfg.scale_grid.clone(),
        mean_q_ratio,
        monotone_violations,
        stable_rows: stable.len(),
        chaotic_rows: rows.iter().filter(|r| r.chaotic).count(),
        spearman_t_qratio: spearman(&t, &q),
        within_cell_spearman: (!cell_rho.is_empty()).then(|| cell_rho.iter().sum::<f64>() / cell_rho.len() as f64),
    }
}
