//! Experiment suites. Each returns a report that renders to tables and a
//! JSON summary.

use std::collections::BTreeMap;

use rand_distr::{Binomial, Distribution};
use serde::Serialize;
use serde_json::json;

use super::estimate::{fit_power_law, tail_probability, EstimateWithCI, ExponentFit, MomentAccumulator, TailBin};
use super::table::{Table, Value};
use super::{par_fold, run_experiment, Accumulator, ExperimentConfig, Needs, Outcome, Reducer, RunResult, Sample};
use crate::eigen::eigh;
use crate::ensemble::{minor, stream_rng, EntryDistributionSpec, HermitianMatrix};
use crate::error::{EigenError, Error, Result};
use crate::linalg::CMatrix;
use crate::spectral::{
    count_in_interval, m_sc, overlaps_xi, semicircle_density, stieltjes, x_and_z_statistics, SpectralInterval,
    SpectralPoint,
};
use crate::Complex64;

/// Minimum events per bin for exponent fits.
pub const MIN_FIT_EVENTS: u64 = 20;

/// Default eta grid of the semicircle experiment.
pub const SEMICIRCLE_GRID: [f64; 4] = [0.05, 0.1, 0.2, 0.4];
/// Default epsilon grid of the Wegner experiment.
pub const WEGNER_GRID: [f64; 4] = [0.125, 0.25, 0.5, 1.0];
/// Default epsilon grid of the repulsion experiment.
pub const REPULSION_GRID: [f64; 5] = [0.25, 0.35, 0.5, 0.7, 1.0];
/// Default K grid of the gap experiment.
pub const GAP_GRID: [f64; 11] = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
/// Default M grid of the delocalization experiment.
pub const DELOC_GRID: [f64; 8] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0];
/// Default delta grid of the overlap lower-tail experiment.
pub const XI_TAIL_GRID: [f64; 5] = [0.05, 0.07, 0.1, 0.14, 0.2];
/// Default delta grid of the quadratic-form experiment.
pub const HANSON_WRIGHT_GRID: [f64; 8] = [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5];

/// Common interface used by the command line.
pub trait Report {
    fn tables(&self) -> Vec<Table>;
    fn summary(&self) -> serde_json::Value;
    /// False when the experiment detected a violation of a deterministic
    /// identity.
    fn passed(&self) -> bool {
        true
    }
}

/// Sample bookkeeping of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub n_samples: u64,
    pub used: u64,
    pub censored: u64,
    pub failed: u64,
}

impl<A> From<&RunResult<A>> for RunStats {
    fn from(r: &RunResult<A>) -> Self {
        Self {
            n_samples: r.n_samples,
            used: r.used,
            censored: r.censored,
            failed: r.failed,
        }
    }
}

fn grid_or(config: &ExperimentConfig, default: &[f64]) -> Vec<f64> {
    if config.grid.is_empty() {
        default.to_vec()
    } else {
        config.grid.clone()
    }
}

fn with_grid(config: &ExperimentConfig, default: &[f64], allow_zero: bool) -> Result<ExperimentConfig> {
    let mut c = config.clone();
    c.grid = grid_or(config, default);
    c.validate_common()?;
    c.check_grid(allow_zero)?;
    Ok(c)
}

fn estimate_cells(e: &EstimateWithCI) -> Vec<Value> {
    vec![e.point.into(), e.lo.into(), e.hi.into()]
}

/// Interval of width `eps / n` centered at `e`.
pub fn scaled_window(e: f64, eps: f64, n: usize) -> Result<SpectralInterval> {
    SpectralInterval::new(e, eps / n as f64)
}

#[derive(Default)]
struct Counts(Vec<u64>);

impl Accumulator for Counts {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
    }
}

impl Counts {
    fn bump(&mut self, i: usize) {
        if self.0.len() <= i {
            self.0.resize(i + 1, 0);
        }
        self.0[i] += 1;
    }

    fn get(&self, i: usize) -> u64 {
        self.0.get(i).copied().unwrap_or(0)
    }
}

/// Exceedance of some statistic at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExceedanceRow {
    pub x: f64,
    /// `N x` for scale grids.
    pub n_x: f64,
    pub estimate: EstimateWithCI,
}

/// True if no later estimate lies entirely above an earlier one.
pub fn non_increasing_up_to_ci(rows: &[ExceedanceRow]) -> bool {
    rows.iter()
        .enumerate()
        .all(|(i, a)| rows[i + 1..].iter().all(|b| b.estimate.lo <= a.estimate.hi))
}

/// True if the point estimates never increase.
pub fn non_increasing_exact(rows: &[ExceedanceRow]) -> bool {
    rows.windows(2).all(|w| w[1].estimate.point <= w[0].estimate.point)
}

// Local semicircle law

struct SemicircleReducer {
    energy: f64,
    delta: f64,
    etas: Vec<f64>,
}

impl Reducer for SemicircleReducer {
    type Acc = Counts;

    fn needs(&self) -> Needs {
        Needs::Eigenvalues
    }

    fn observe(&self, s: &Sample<'_>, acc: &mut Counts) -> Result<Outcome, EigenError> {
        let ev = &s.spectrum().eigenvalues;
        let nf = ev.len() as f64;
        let rho = semicircle_density(self.energy);
        let k = self.etas.len();
        if acc.0.len() < 2 * k {
            acc.0.resize(2 * k, 0);
        }
        for (j, &eta) in self.etas.iter().enumerate() {
            let z = SpectralPoint::new(self.energy, eta).expect("positive grid");
            if (stieltjes(ev, z) - m_sc(z)).norm() >= self.delta {
                acc.0[j] += 1;
            }
            let count = count_in_interval(ev, SpectralInterval::around(z)) as f64;
            if (count / (nf * eta) - rho).abs() >= self.delta {
                acc.0[k + j] += 1;
            }
        }
        Ok(Outcome::Used)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemicircleReport {
    pub n: usize,
    pub energy: f64,
    pub delta: f64,
    /// `P(|m - m_sc| >= delta)` per eta.
    pub stieltjes_rows: Vec<ExceedanceRow>,
    /// `P(|N_eta / (N eta) - rho_sc| >= delta)` per eta.
    pub count_rows: Vec<ExceedanceRow>,
    pub stieltjes_monotone: bool,
    pub count_monotone: bool,
    /// Grid points below the scale `K / N`, `K = 300 / (pi rho_sc(E))`.
    pub below_scale: Vec<f64>,
    pub run: RunStats,
}

/// Exceedance probabilities of the Stieltjes transform and the normalized
/// eigenvalue count around the semicircle law on an eta grid.
pub fn semicircle_concentration(config: &ExperimentConfig) -> Result<SemicircleReport> {
    let cfg = with_grid(config, &SEMICIRCLE_GRID, false)?;
    let k_scale = 300.0 / (std::f64::consts::PI * semicircle_density(cfg.energy));
    let below_scale: Vec<f64> = cfg
        .grid
        .iter()
        .copied()
        .filter(|&eta| eta < k_scale / cfg.n as f64)
        .collect();
    if !below_scale.is_empty() {
        log::warn!(
            "eta values {below_scale:?} lie below K/N = {:.3e}, where the estimate is not expected to hold",
            k_scale / cfg.n as f64
        );
    }
    let reducer = SemicircleReducer {
        energy: cfg.energy,
        delta: cfg.delta,
        etas: cfg.grid.clone(),
    };
    let run = run_experiment(&cfg, &reducer)?;
    let k = cfg.grid.len();
    let rows = |offset: usize| -> Vec<ExceedanceRow> {
        cfg.grid
            .iter()
            .enumerate()
            .map(|(j, &eta)| ExceedanceRow {
                x: eta,
                n_x: cfg.n as f64 * eta,
                estimate: tail_probability(run.acc.get(offset + j), run.used),
            })
            .collect()
    };
    let stieltjes_rows = rows(0);
    let count_rows = rows(k);
    Ok(SemicircleReport {
        n: cfg.n,
        energy: cfg.energy,
        delta: cfg.delta,
        stieltjes_monotone: non_increasing_up_to_ci(&stieltjes_rows),
        count_monotone: non_increasing_up_to_ci(&count_rows),
        stieltjes_rows,
        count_rows,
        below_scale,
        run: (&run).into(),
    })
}

fn exceedance_table(name: &str, rows: &[ExceedanceRow], n: u64) -> Table {
    let mut t = Table::new(name, &["eta", "n_eta", "p_exceed", "ci_lo", "ci_hi", "n_samples"]);
    for r in rows {
        let mut row = vec![r.x.into(), r.n_x.into()];
        row.extend(estimate_cells(&r.estimate));
        row.push(n.into());
        t.push(row);
    }
    t
}

impl Report for SemicircleReport {
    fn tables(&self) -> Vec<Table> {
        vec![
            exceedance_table("semicircle", &self.stieltjes_rows, self.run.used),
            exceedance_table("semicircle_count", &self.count_rows, self.run.used),
        ]
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "stieltjes_monotone": self.stieltjes_monotone,
            "count_monotone": self.count_monotone,
            "below_scale": self.below_scale,
            "run": self.run,
        })
    }
}

// Wegner estimate

#[derive(Default)]
struct WegnerAcc {
    joint: BTreeMap<Vec<u32>, u64>,
    m2: Vec<MomentAccumulator>,
}

impl Accumulator for WegnerAcc {
    fn merge(&mut self, other: Self) {
        for (k, v) in other.joint {
            *self.joint.entry(k).or_insert(0) += v;
        }
        if self.m2.len() < other.m2.len() {
            self.m2.resize(other.m2.len(), MomentAccumulator::default());
        }
        for (a, b) in self.m2.iter_mut().zip(&other.m2) {
            a.merge(b);
        }
    }
}

struct WegnerReducer {
    energy: f64,
    windows: Vec<(SpectralInterval, SpectralPoint)>,
}

impl Reducer for WegnerReducer {
    type Acc = WegnerAcc;

    fn needs(&self) -> Needs {
        Needs::Eigenvalues
    }

    fn observe(&self, s: &Sample<'_>, acc: &mut WegnerAcc) -> Result<Outcome, EigenError> {
        let ev = &s.spectrum().eigenvalues;
        let nf = ev.len() as f64;
        if acc.m2.len() < self.windows.len() {
            acc.m2.resize(self.windows.len(), MomentAccumulator::default());
        }
        let counts: Vec<u32> = self
            .windows
            .iter()
            .map(|(i, _)| count_in_interval(ev, *i) as u32)
            .collect();
        *acc.joint.entry(counts).or_insert(0) += 1;
        for ((_, z), m2) in self.windows.iter().zip(acc.m2.iter_mut()) {
            debug_assert_eq!(z.e(), self.energy);
            m2.push(nf * z.eta() * stieltjes(ev, *z).norm_sqr());
        }
        Ok(Outcome::Used)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WegnerRow {
    pub epsilon: f64,
    pub eta: f64,
    pub mean_n: EstimateWithCI,
    pub mean_n2: EstimateWithCI,
    pub mean_nk: EstimateWithCI,
    /// `(N eta) E |m(E + i eta)|^2`.
    pub n_eta_m2: EstimateWithCI,
    /// `E N_I / (N |I|)`.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WegnerReport {
    pub n: usize,
    pub energy: f64,
    pub k: u32,
    pub rows: Vec<WegnerRow>,
    /// `max / min` over the grid of `E N_I^2 / epsilon`.
    pub ratio: f64,
    pub ratio_ci: (f64, f64),
    pub ratio_bound: f64,
    pub flagged: bool,
    pub run: RunStats,
}

/// Bootstrap replicates for the Wegner ratio interval.
pub const BOOTSTRAP_REPLICATES: usize = 400;

fn moments_from_joint(joint: &[(Vec<u32>, u64)], j: usize, power: i32) -> MomentAccumulator {
    let mut acc = MomentAccumulator::default();
    for (counts, mult) in joint {
        let x = (counts[j] as f64).powi(power);
        acc.n += mult;
        if x != 0.0 {
            acc.nonzero += mult;
        }
        acc.sum += x * *mult as f64;
        acc.sum_sq += x * x * *mult as f64;
    }
    acc
}

fn ratio_of(second_moments: &[f64], eps: &[f64]) -> f64 {
    let scaled: Vec<f64> = second_moments.iter().zip(eps).map(|(m, e)| m / e).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    if sorted[hi] == sorted[lo] {
        sorted[lo]
    } else {
        sorted[lo] + t * (sorted[hi] - sorted[lo])
    }
}

/// Moments of the eigenvalue count in windows of width `epsilon / N`.
pub fn wegner_moments(config: &ExperimentConfig, ratio_bound: f64) -> Result<WegnerReport> {
    let cfg = with_grid(config, &WEGNER_GRID, false)?;
    let n = cfg.n;
    let windows = cfg
        .grid
        .iter()
        .map(|&eps| {
            let z = SpectralPoint::new(cfg.energy, eps / n as f64)?;
            Ok((SpectralInterval::around(z), z))
        })
        .collect::<Result<Vec<_>>>()?;
    let run = run_experiment(
        &cfg,
        &WegnerReducer {
            energy: cfg.energy,
            windows,
        },
    )?;
    let joint: Vec<(Vec<u32>, u64)> = run.acc.joint.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let rows: Vec<WegnerRow> = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(j, &eps)| {
            let m1 = moments_from_joint(&joint, j, 1).estimate();
            WegnerRow {
                epsilon: eps,
                eta: eps / n as f64,
                mean_n: m1,
                mean_n2: moments_from_joint(&joint, j, 2).estimate(),
                mean_nk: moments_from_joint(&joint, j, cfg.k as i32).estimate(),
                n_eta_m2: run.acc.m2.get(j).copied().unwrap_or_default().estimate(),
                density: m1.point / eps,
            }
        })
        .collect();
    let second: Vec<f64> = rows.iter().map(|r| r.mean_n2.point).collect();
    let ratio = ratio_of(&second, &cfg.grid);

    // Multinomial bootstrap over the joint count histogram.
    let mut rng = stream_rng(cfg.master_seed, u64::MAX);
    let total = run.used;
    let mut reps = Vec::with_capacity(BOOTSTRAP_REPLICATES);
    for _ in 0..BOOTSTRAP_REPLICATES {
        let mut left = total;
        let mut mass_left = 1.0_f64;
        let mut sums = vec![0.0; cfg.grid.len()];
        for (i, (counts, mult)) in joint.iter().enumerate() {
            let p = *mult as f64 / total as f64;
            let draw = if i + 1 == joint.len() || left == 0 {
                left
            } else {
                let q = (p / mass_left).clamp(0.0, 1.0);
                Binomial::new(left, q).expect("valid binomial").sample(&mut rng)
            };
            left -= draw;
            mass_left -= p;
            for (s, &c) in sums.iter_mut().zip(counts) {
                *s += draw as f64 * (c as f64).powi(2);
            }
        }
        let moments: Vec<f64> = sums.iter().map(|s| s / total as f64).collect();
        reps.push(ratio_of(&moments, &cfg.grid));
    }
    reps.sort_by(f64::total_cmp);
    let ratio_ci = (percentile(&reps, 0.025), percentile(&reps, 0.975));
    Ok(WegnerReport {
        n,
        energy: cfg.energy,
        k: cfg.k,
        rows,
        ratio,
        ratio_ci,
        ratio_bound,
        flagged: !(ratio <= ratio_bound),
        run: (&run).into(),
    })
}

impl Report for WegnerReport {
    fn tables(&self) -> Vec<Table> {
        let mut t = Table::new(
            "wegner",
            &[
                "epsilon",
                "eta",
                "mean_n",
                "mean_n_ci_lo",
                "mean_n_ci_hi",
                "mean_n2",
                "mean_n2_ci_lo",
                "mean_n2_ci_hi",
                "mean_nk",
                "mean_nk_ci_lo",
                "mean_nk_ci_hi",
                "n_eta_m2",
                "n_eta_m2_ci_lo",
                "n_eta_m2_ci_hi",
                "density",
                "n_samples",
            ],
        );
        for r in &self.rows {
            let mut row = vec![r.epsilon.into(), r.eta.into()];
            for e in [&r.mean_n, &r.mean_n2, &r.mean_nk, &r.n_eta_m2] {
                row.extend(estimate_cells(e));
            }
            row.push(r.density.into());
            row.push(self.run.used.into());
            t.push(row);
        }
        let mut d = Table::new("wegner_ratio", &["ratio", "ci_lo", "ci_hi", "bound", "flagged"]);
        d.push(vec![
            self.ratio.into(),
            self.ratio_ci.0.into(),
            self.ratio_ci.1.into(),
            self.ratio_bound.into(),
            self.flagged.into(),
        ]);
        vec![t, d]
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "k": self.k,
            "ratio": self.ratio,
            "ratio_ci": [self.ratio_ci.0, self.ratio_ci.1],
            "ratio_bound": self.ratio_bound,
            "flagged": self.flagged,
            "run": self.run,
        })
    }
}

// Level repulsion

#[derive(Default)]
struct Histograms(Vec<Counts>);

impl Accumulator for Histograms {
    fn merge(&mut self, other: Self) {
        if self.0.len() < other.0.len() {
            self.0.resize_with(other.0.len(), Counts::default);
        }
        for (a, b) in self.0.iter_mut().zip(other.0) {
            a.merge(b);
        }
    }
}

struct CountReducer {
    windows: Vec<SpectralInterval>,
}

impl Reducer for CountReducer {
    type Acc = Histograms;

    fn needs(&self) -> Needs {
        Needs::Eigenvalues
    }

    fn observe(&self, s: &Sample<'_>, acc: &mut Histograms) -> Result<Outcome, EigenError> {
        let ev = &s.spectrum().eigenvalues;
        if acc.0.len() < self.windows.len() {
            acc.0.resize_with(self.windows.len(), Counts::default);
        }
        for (w, h) in self.windows.iter().zip(acc.0.iter_mut()) {
            h.bump(count_in_interval(ev, *w));
        }
        Ok(Outcome::Used)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepulsionRow {
    pub epsilon: f64,
    pub estimate: EstimateWithCI,
    pub used_in_fit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepulsionFit {
    pub k: u32,
    pub target: f64,
    pub rows: Vec<RepulsionRow>,
    pub fit: std::result::Result<ExponentFit, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepulsionReport {
    pub n: usize,
    pub energy: f64,
    pub fit: RepulsionFit,
    /// The same data fitted at `k = 1`.
    pub control: RepulsionFit,
    /// Per epsilon, the number of samples with exactly `j` eigenvalues in the
    /// window, indexed by `j`.
    pub histograms: Vec<Vec<u64>>,
    pub run: RunStats,
}

fn repulsion_fit_for(grid: &[f64], hist: &[Counts], used: u64, k: u32) -> RepulsionFit {
    let bins: Vec<TailBin> = grid
        .iter()
        .zip(hist)
        .map(|(&eps, h)| TailBin {
            x: eps,
            n_events: h.0.iter().skip(k as usize).sum(),
            n: used,
        })
        .collect();
    for b in bins.iter().filter(|b| b.n_events < MIN_FIT_EVENTS) {
        log::info!(
            "repulsion k={k}: epsilon {} has {} events, excluded from the fit",
            b.x,
            b.n_events
        );
    }
    let rows = bins
        .iter()
        .map(|b| RepulsionRow {
            epsilon: b.x,
            estimate: tail_probability(b.n_events, b.n),
            used_in_fit: b.n_events >= MIN_FIT_EVENTS,
        })
        .collect();
    RepulsionFit {
        k,
        target: (k * k) as f64,
        rows,
        fit: fit_power_law(&bins, MIN_FIT_EVENTS).map_err(|e| e.to_string()),
    }
}

/// Fits the exponent of `P(N_I >= k)` against `epsilon` for windows of width
/// `epsilon / N`.
pub fn repulsion_fit(config: &ExperimentConfig) -> Result<RepulsionReport> {
    let cfg = with_grid(config, &REPULSION_GRID, false)?;
    if cfg.grid.iter().any(|&e| e > 1.0) {
        return Err(Error::InvalidArgument("repulsion epsilon grid must lie in (0, 1]".into()));
    }
    let windows = cfg
        .grid
        .iter()
        .map(|&eps| scaled_window(cfg.energy, eps, cfg.n))
        .collect::<Result<Vec<_>>>()?;
    let run = run_experiment(&cfg, &CountReducer { windows })?;
    let mut hist = run.acc.0;
    hist.resize_with(cfg.grid.len(), Counts::default);
    Ok(RepulsionReport {
        n: cfg.n,
        energy: cfg.energy,
        fit: repulsion_fit_for(&cfg.grid, &hist, run.used, cfg.k),
        control: repulsion_fit_for(&cfg.grid, &hist, run.used, 1),
        histograms: hist.into_iter().map(|h| h.0).collect(),
        run: RunStats {
            n_samples: run.n_samples,
            used: run.used,
            censored: run.censored,
            failed: run.failed,
        },
    })
}

fn repulsion_table(name: &str, f: &RepulsionFit) -> Table {
    let mut t = Table::new(
        name,
        &["epsilon", "k", "n_events", "p_at_least_k", "ci_lo", "ci_hi", "n_samples", "used_in_fit"],
    );
    for r in &f.rows {
        let mut row = vec![r.epsilon.into(), (f.k as u64).into(), r.estimate.n_events.into()];
        row.extend(estimate_cells(&r.estimate));
        row.push(r.estimate.n.into());
        row.push(r.used_in_fit.into());
        t.push(row);
    }
    t
}

fn fit_row(t: &mut Table, label: &str, target: f64, fit: &std::result::Result<ExponentFit, String>) {
    match fit {
        Ok(f) => t.push(vec![
            label.into(),
            target.into(),
            f.slope.into(),
            f.slope_stderr.into(),
            f.intercept.into(),
            f.r2.into(),
            f.bins_used.into(),
            "".into(),
        ]),
        Err(e) => t.push(vec![
            label.into(),
            target.into(),
            f64::NAN.into(),
            f64::NAN.into(),
            f64::NAN.into(),
            f64::NAN.into(),
            0u64.into(),
            e.replace(',', ";").as_str().into(),
        ]),
    }
}

fn fit_table(name: &str) -> Table {
    Table::new(
        name,
        &["fit", "target", "slope", "slope_stderr", "intercept", "r2", "bins_used", "note"],
    )
}

impl Report for RepulsionReport {
    fn tables(&self) -> Vec<Table> {
        let mut fits = fit_table("repulsion_fit");
        fit_row(&mut fits, &format!("k={}", self.fit.k), self.fit.target, &self.fit.fit);
        fit_row(&mut fits, "k=1", self.control.target, &self.control.fit);
        vec![
            repulsion_table("repulsion", &self.fit),
            repulsion_table("repulsion_control", &self.control),
            fits,
        ]
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "fit": self.fit.fit,
            "target": self.fit.target,
            "control": self.control.fit,
            "histograms": self.histograms,
            "run": self.run,
        })
    }
}

// Gap tail

struct GapReducer {
    energy: f64,
    ks: Vec<f64>,
}

impl Reducer for GapReducer {
    type Acc = Counts;

    fn needs(&self) -> Needs {
        Needs::Eigenvalues
    }

    fn observe(&self, s: &Sample<'_>, acc: &mut Counts) -> Result<Outcome, EigenError> {
        let ev = &s.spectrum().eigenvalues;
        let alpha = ev.partition_point(|&x| x <= self.energy);
        if alpha == 0 || alpha == ev.len() {
            return Ok(Outcome::Censored);
        }
        let scaled_gap = ev.len() as f64 * (ev[alpha] - self.energy);
        if acc.0.len() < self.ks.len() {
            acc.0.resize(self.ks.len(), 0);
        }
        for (j, &k) in self.ks.iter().enumerate() {
            if scaled_gap >= k {
                acc.0[j] += 1;
            }
        }
        Ok(Outcome::Used)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub n: usize,
    pub energy: f64,
    pub rows: Vec<ExceedanceRow>,
    pub non_increasing: bool,
    /// `c` and `ln C` of the least-squares fit `ln P = ln C - c sqrt(K)` over
    /// grid points with `K > 0` and at least one event.
    pub fitted_c: Option<(f64, f64)>,
    pub run: RunStats,
}

impl GapReport {
    pub fn probability_at(&self, k: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.x == k).map(|r| r.estimate.point)
    }
}

/// `P(lambda_{alpha+1} - E >= K / N)` where `lambda_alpha` is the largest
/// eigenvalue at or below `E`. Samples without an eigenvalue on either side
/// of `E` are censored.
pub fn gap_tail(config: &ExperimentConfig) -> Result<GapReport> {
    let cfg = with_grid(config, &GAP_GRID, true)?;
    let run = run_experiment(
        &cfg,
        &GapReducer {
            energy: cfg.energy,
            ks: cfg.grid.clone(),
        },
    )?;
    let rows: Vec<ExceedanceRow> = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(j, &k)| ExceedanceRow {
            x: k,
            n_x: k,
            estimate: tail_probability(run.acc.get(j), run.used),
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.x > 0.0 && r.estimate.n_events > 0)
        .map(|r| (r.x.sqrt(), r.estimate.point.ln()))
        .collect();
    let fitted_c = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let xb = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let yb = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - xb).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - xb) * (p.1 - yb)).sum();
        let slope = sxy / sxx;
        Some((-slope, yb - slope * xb))
    } else {
        None
    };
    Ok(GapReport {
        n: cfg.n,
        energy: cfg.energy,
        non_increasing: non_increasing_exact(&rows),
        rows,
        fitted_c,
        run: (&run).into(),
    })
}

impl Report for GapReport {
    fn tables(&self) -> Vec<Table> {
        let mut t = Table::new("gaps", &["k", "n_events", "p_exceed", "ci_lo", "ci_hi", "n_samples"]);
        for r in &self.rows {
            let mut row = vec![r.x.into(), r.estimate.n_events.into()];
            row.extend(estimate_cells(&r.estimate));
            row.push(r.estimate.n.into());
            t.push(row);
        }
        vec![t]
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "non_increasing": self.non_increasing,
            "fitted_c": self.fitted_c.map(|c| c.0),
            "fitted_log_prefactor": self.fitted_c.map(|c| c.1),
            "run": self.run,
        })
    }
}

// Eigenvector delocalization

#[derive(Default)]
struct DelocAcc {
    values: Vec<(f64, f64)>,
    exceed_vectors: Vec<u64>,
    exists_inf: Vec<u64>,
    exists_p: Vec<u64>,
    above_log_threshold: u64,
    max_norm_defect: f64,
}

impl Accumulator for DelocAcc {
    fn merge(&mut self, mut other: Self) {
        self.values.append(&mut other.values);
        self.exceed_vectors.merge(other.exceed_vectors);
        self.exists_inf.merge(other.exists_inf);
        self.exists_p.merge(other.exists_p);
        self.above_log_threshold += other.above_log_threshold;
        self.max_norm_defect = self.max_norm_defect.max(other.max_norm_defect);
    }
}

struct DelocReducer {
    interval: SpectralInterval,
    p: f64,
    ms: Vec<f64>,
    log_threshold: f64,
}

impl Reducer for DelocReducer {
    type Acc = DelocAcc;

    fn needs(&self) -> Needs {
        Needs::Eigenvectors
    }

    fn observe(&self, s: &Sample<'_>, acc: &mut DelocAcc) -> Result<Outcome, EigenError> {
        let dec = s.spectrum();
        let vecs = dec.eigenvectors.as_ref().expect("eigenvectors requested");
        let n = dec.n();
        let nf = n as f64;
        let k = self.ms.len();
        if acc.exceed_vectors.len() < k {
            acc.exceed_vectors.resize(k, 0);
            acc.exists_inf.resize(k, 0);
            acc.exists_p.resize(k, 0);
        }
        let mut best_inf = f64::NEG_INFINITY;
        let mut best_p = f64::NEG_INFINITY;
        let mut any = false;
        for (alpha, &mu) in dec.eigenvalues.iter().enumerate() {
            if !self.interval.contains(mu) {
                continue;
            }
            any = true;
            let v = vecs.vector(alpha);
            let sup = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
            let s_inf = nf.sqrt() * sup;
            let s_p = if self.p == 2.0 {
                v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
            } else {
                nf.powf(0.5 - 1.0 / self.p) * v.iter().map(|c| c.norm().powf(self.p)).sum::<f64>().powf(1.0 / self.p)
            };
            let norm2 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            acc.max_norm_defect = acc.max_norm_defect.max((norm2 - 1.0).abs());
            for (j, &m) in self.ms.iter().enumerate() {
                if s_inf >= m {
                    acc.exceed_vectors[j] += 1;
                }
            }
            if s_inf > self.log_threshold {
                acc.above_log_threshold += 1;
            }
            best_inf = best_inf.max(s_inf);
            best_p = best_p.max(s_p);
            acc.values.push((s_inf, s_p));
        }
        if !any {
            return Ok(Outcome::Censored);
        }
        for (j, &m) in self.ms.iter().enumerate() {
            if best_inf >= m {
                acc.exists_inf[j] += 1;
            }
            if best_p >= m {
                acc.exists_p[j] += 1;
            }
        }
        Ok(Outcome::Used)
    }
}

/// Empirical quantiles of one statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
    pub count: usize,
}

impl Quantiles {
    pub fn of(mut xs: Vec<f64>) -> Self {
        xs.sort_by(f64::total_cmp);
        Self {
            q05: percentile(&xs, 0.05),
            q25: percentile(&xs, 0.25),
            median: percentile(&xs, 0.5),
            q75: percentile(&xs, 0.75),
            q95: percentile(&xs, 0.95),
            max: xs.last().copied().unwrap_or(f64::NAN),
            count: xs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelocRow {
    pub m: f64,
    /// Fraction of eigenvectors in the window with `sqrt(N) ||v||_inf >= M`.
    pub per_vector: EstimateWithCI,
    /// Fraction of samples with some such eigenvector.
    pub exists_inf: EstimateWithCI,
    /// Fraction of samples with some `N^{1/2 - 1/p} ||v||_p >= M`.
    pub exists_p: EstimateWithCI,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelocReport {
    pub n: usize,
    pub p: f64,
    pub interval: (f64, f64),
    pub sup: Quantiles,
    pub lp: Quantiles,
    pub rows: Vec<DelocRow>,
    /// `3 sqrt(2 ln N)`.
    pub log_threshold: f64,
    pub above_log_threshold: u64,
    /// `max | ||v||_2 - 1 |` over inspected vectors.
    pub max_norm_defect: f64,
    pub run: RunStats,
}

/// Sup-norm and `l^p` statistics of eigenvectors with eigenvalue in
/// `interval`.
pub fn delocalization_stats(config: &ExperimentConfig, interval: SpectralInterval, p: f64) -> Result<DelocReport> {
    if !(p >= 2.0) {
        return Err(Error::InvalidArgument(format!("p must be >= 2, got {p}")));
    }
    let cfg = with_grid(config, &DELOC_GRID, false)?;
    let log_threshold = 3.0 * (2.0 * (cfg.n as f64).ln()).sqrt();
    let run = run_experiment(
        &cfg,
        &DelocReducer {
            interval,
            p,
            ms: cfg.grid.clone(),
            log_threshold,
        },
    )?;
    let acc = run.acc;
    let n_vec = acc.values.len() as u64;
    let rows = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(j, &m)| DelocRow {
            m,
            per_vector: tail_probability(acc.exceed_vectors.get(j).copied().unwrap_or(0), n_vec),
            exists_inf: tail_probability(acc.exists_inf.get(j).copied().unwrap_or(0), run.used),
            exists_p: tail_probability(acc.exists_p.get(j).copied().unwrap_or(0), run.used),
        })
        .collect();
    Ok(DelocReport {
        n: cfg.n,
        p,
        interval: (interval.lo(), interval.hi()),
        sup: Quantiles::of(acc.values.iter().map(|v| v.0).collect()),
        lp: Quantiles::of(acc.values.iter().map(|v| v.1).collect()),
        rows,
        log_threshold,
        above_log_threshold: acc.above_log_threshold,
        max_norm_defect: acc.max_norm_defect,
        run: RunStats {
            n_samples: run.n_samples,
            used: run.used,
            censored: run.censored,
            failed: run.failed,
        },
    })
}

impl Report for DelocReport {
    fn tables(&self) -> Vec<Table> {
        let mut q = Table::new(
            "deloc_quantiles",
            &["statistic", "q05", "q25", "median", "q75", "q95", "max", "n_vectors"],
        );
        for (name, s) in [("sqrt_n_sup", &self.sup), ("scaled_lp", &self.lp)] {
            q.push(vec![
                name.into(),
                s.q05.into(),
                s.q25.into(),
                s.median.into(),
                s.q75.into(),
                s.q95.into(),
                s.max.into(),
                s.count.into(),
            ]);
        }
        let mut e = Table::new(
            "deloc_exceedance",
            &[
                "m",
                "p_vector",
                "p_vector_ci_lo",
                "p_vector_ci_hi",
                "p_exists_sup",
                "p_exists_sup_ci_lo",
                "p_exists_sup_ci_hi",
                "p_exists_lp",
                "p_exists_lp_ci_lo",
                "p_exists_lp_ci_hi",
                "n_vectors",
                "n_samples",
            ],
        );
        for r in &self.rows {
            let mut row = vec![r.m.into()];
            row.extend(estimate_cells(&r.per_vector));
            row.extend(estimate_cells(&r.exists_inf));
            row.extend(estimate_cells(&r.exists_p));
            row.push(r.per_vector.n.into());
            row.push(self.run.used.into());
            e.push(row);
        }
        vec![q, e]
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "p": self.p,
            "interval": [self.interval.0, self.interval.1],
            "log_threshold": self.log_threshold,
            "above_log_threshold": self.above_log_threshold,
            "max_norm_defect": self.max_norm_defect,
            "run": self.run,
        })
    }
}

// Overlap lower tail and concentration

/// Indices of the `m` entries of the ascending slice nearest `e`.
pub fn nearest_indices(sorted: &[f64], e: f64, m: usize) -> std::ops::Range<usize> {
    let m = m.min(sorted.len());
    let mut hi = sorted.partition_point(|&x| x < e);
    let mut lo = hi;
    while hi - lo < m {
        let take_left = if lo == 0 {
            false
        } else if hi == sorted.len() {
            true
        } else {
            e - sorted[lo - 1] <= sorted[hi] - e
        };
        if take_left {
            lo -= 1;
        } else {
            hi += 1;
        }
    }
    lo..hi
}

fn minor_overlaps(h: &HermitianMatrix) -> Result<(Vec<f64>, Vec<f64>), EigenError> {
    let md = minor(h, 0).expect("n >= 2");
    let dec = eigh(&md.b, true)?;
    let xi = overlaps_xi(&dec, &md.a, h.n()).map_err(|_| EigenError::Certification {
        what: "overlap completeness",
        value: f64::NAN,
        limit: 0.0,
    })?;
    Ok((xi.xi, dec.eigenvalues))
}

#[derive(Default)]
struct XiTailAcc {
    counts: Vec<u64>,
    mean: MomentAccumulator,
}

impl Accumulator for XiTailAcc {
    fn merge(&mut self, other: Self) {
        self.counts.merge(other.counts);
        self.mean.merge(&other.mean);
    }
}

struct XiTailReducer {
    energy: f64,
    m: usize,
    deltas: Vec<f64>,
}

impl Reducer for XiTailReducer {
    type Acc = XiTailAcc;

    fn needs(&self) -> Needs {
        Needs::Matrix
    }

    fn observe(&self, s: &Sample<'_>, acc: &mut XiTailAcc) -> Result<Outcome, EigenError> {
        let (xi, lambda) = minor_overlaps(s.matrix())?;
        let idx = nearest_indices(&lambda, self.energy, self.m);
        let avg = xi[idx].iter().sum::<f64>() / self.m as f64;
        if acc.counts.len() < self.deltas.len() {
            acc.counts.resize(self.deltas.len(), 0);
        }
        for (j, &d) in self.deltas.iter().enumerate() {
            if avg <= d {
                acc.counts[j] += 1;
            }
        }
        acc.mean.push(avg);
        Ok(Outcome::Used)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiTailReport {
    pub n: usize,
    pub m: usize,
    pub rows: Vec<ExceedanceRow>,
    pub fit: std::result::Result<ExponentFit, String>,
    /// Mean of `(1/m) sum xi` over samples.
    pub mean: EstimateWithCI,
    pub run: RunStats,
}

/// `P((1/m) sum_{alpha in I} xi_alpha <= delta)` for `I` the `m` eigenvalues
/// of the minor `B^(1)` nearest `E`, with a log-log fit in `delta` over bins
/// with `delta < 1`.
pub fn xi_lower_tail(config: &ExperimentConfig, m: usize) -> Result<XiTailReport> {
    let cfg = with_grid(config, &XI_TAIL_GRID, false)?;
    if cfg.n < 2 || m == 0 || m > cfg.n - 1 {
        return Err(Error::InvalidArgument(format!(
            "index set size m = {m} must lie in 1..={}",
            cfg.n.saturating_sub(1)
        )));
    }
    let run = run_experiment(
        &cfg,
        &XiTailReducer {
            energy: cfg.energy,
            m,
            deltas: cfg.grid.clone(),
        },
    )?;
    let rows: Vec<ExceedanceRow> = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(j, &d)| ExceedanceRow {
            x: d,
            n_x: d * m as f64,
            estimate: tail_probability(run.acc.counts.get(j).copied().unwrap_or(0), run.used),
        })
        .collect();
    let bins: Vec<TailBin> = rows
        .iter()
        .filter(|r| r.x < 1.0)
        .map(|r| TailBin {
            x: r.x,
            n_events: r.estimate.n_events,
            n: r.estimate.n,
        })
        .collect();
    Ok(XiTailReport {
        n: cfg.n,
        m,
        fit: fit_power_law(&bins, MIN_FIT_EVENTS).map_err(|e| e.to_string()),
        rows,
        mean: run.acc.mean.estimate(),
        run: (&run).into(),
    })
}

impl Report for XiTailReport {
    fn tables(&self) -> Vec<Table> {
        let mut t = Table::new(
            "xi_tail",
            &["delta", "threshold", "n_events", "p_below", "ci_lo", "ci_hi", "n_samples"],
        );
        for r in &self.rows {
            let mut row = vec![r.x.into(), r.n_x.into(), r.estimate.n_events.into()];
            row.extend(estimate_cells(&r.estimate));
            row.push(r.estimate.n.into());
            t.push(row);
        }
        let mut f = fit_table("xi_tail_fit");
        fit_row(&mut f, &format!("m={}", self.m), self.m as f64, &self.fit);
        vec![t, f]
    }

    fn summary(&self) -> serde_json::Value {
        json!({ "m": self.m, "fit": self.fit, "mean": self.mean, "run": self.run })
    }
}

#[derive(Default)]
struct ConcentrationAcc {
    xi: MomentAccumulator,
    x_abs: MomentAccumulator,
    x_re: MomentAccumulator,
    x_im: MomentAccumulator,
    z: MomentAccumulator,
    count: MomentAccumulator,
}

impl Accumulator for ConcentrationAcc {
    fn merge(&mut self, o: Self) {
        self.xi.merge(&o.xi);
        self.x_abs.merge(&o.x_abs);
        self.x_re.merge(&o.x_re);
        self.x_im.merge(&o.x_im);
        self.z.merge(&o.z);
        self.count.merge(&o.count);
    }
}

struct ConcentrationReducer {
    z: SpectralPoint,
}

impl Reducer for ConcentrationReducer {
    type Acc = ConcentrationAcc;

    fn needs(&self) -> Needs {
        Needs::Matrix
    }

    fn observe(&self, s: &Sample<'_>, acc: &mut ConcentrationAcc) -> Result<Outcome, EigenError> {
        let h = s.matrix();
        let md = minor(h, 0).expect("n >= 2");
        let dec = eigh(&md.b, true)?;
        let xi = overlaps_xi(&dec, &md.a, h.n()).map_err(|_| EigenError::Certification {
            what: "overlap completeness",
            value: f64::NAN,
            limit: 0.0,
        })?;
        for &x in &xi.xi {
            acc.xi.push(x);
        }
        let interval = SpectralInterval::around(self.z);
        let (x, zs) = x_and_z_statistics(&xi, &dec.eigenvalues, self.z, interval);
        acc.x_abs.push(x.norm());
        acc.x_re.push(x.re);
        acc.x_im.push(x.im);
        acc.z.push(zs);
        acc.count.push(count_in_interval(&dec.eigenvalues, interval) as f64);
        Ok(Outcome::Used)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub energy: f64,
    pub eta: f64,
    /// Mean of `xi_alpha` over all (sample, alpha) pairs.
    pub xi_mean: EstimateWithCI,
    pub x_abs: EstimateWithCI,
    pub x_re: EstimateWithCI,
    pub x_im: EstimateWithCI,
    /// `Z = sum_{lambda in I} xi` and the minor's eigenvalue count in `I`.
    pub z: EstimateWithCI,
    pub count: EstimateWithCI,
    pub run: RunStats,
}

/// Overlap statistics of the first column against the minor `B^(1)`:
/// the mean of `xi`, the fluctuation `X`, and `Z` on `I = [E - eta/2,
/// E + eta/2]`.
pub fn concentration(config: &ExperimentConfig, eta: f64) -> Result<ConcentrationReport> {
    if config.n < 2 {
        return Err(Error::InvalidArgument("concentration needs n >= 2".into()));
    }
    let z = SpectralPoint::new(config.energy, eta)?;
    let run = run_experiment(config, &ConcentrationReducer { z })?;
    let a = &run.acc;
    Ok(ConcentrationReport {
        n: config.n,
        energy: config.energy,
        eta,
        xi_mean: a.xi.estimate(),
        x_abs: a.x_abs.estimate(),
        x_re: a.x_re.estimate(),
        x_im: a.x_im.estimate(),
        z: a.z.estimate(),
        count: a.count.estimate(),
        run: (&run).into(),
    })
}

impl Report for ConcentrationReport {
    fn tables(&self) -> Vec<Table> {
        let mut t = Table::new("concentration", &["statistic", "mean", "ci_lo", "ci_hi", "n"]);
        for (name, e) in [
            ("xi", &self.xi_mean),
            ("x_abs", &self.x_abs),
            ("x_re", &self.x_re),
            ("x_im", &self.x_im),
            ("z", &self.z),
            ("minor_count", &self.count),
        ] {
            let mut row = vec![name.into()];
            row.extend(estimate_cells(e));
            row.push(e.n.into());
            t.push(row);
        }
        vec![t]
    }

    fn summary(&self) -> serde_json::Value {
        json!({ "eta": self.eta, "xi_mean": self.xi_mean, "run": self.run })
    }
}

// Quadratic forms

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HansonWrightRow {
    pub delta: f64,
    pub estimate: EstimateWithCI,
    /// `4 exp(-c min(delta/A, delta^2/A^2))` at the envelope constant.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HansonWrightReport {
    pub n: usize,
    /// `(Tr A A^*)^{1/2}`.
    pub a_norm: f64,
    pub rows: Vec<HansonWrightRow>,
    /// Largest `c` with every empirical tail below the bound; `None` when no
    /// tail is positive.
    pub c_envelope: Option<f64>,
    /// Least-squares `c` through the origin in `ln(P/4)` against the
    /// exponent.
    pub c_lsq: Option<f64>,
    pub non_increasing: bool,
    pub below_bound: bool,
    pub n_samples: u64,
}

fn hw_exponent(delta: f64, a: f64) -> f64 {
    let r = delta / a;
    r.min(r * r)
}

/// Tail of `X = sum_jk a_jk (b_j conj(b_k) - E b_j conj(b_k))` for i.i.d.
/// entries `b_j` from `spec`'s off-diagonal law.
pub fn hanson_wright_trial(
    a: &CMatrix,
    spec: &EntryDistributionSpec,
    n_samples: u64,
    delta_grid: &[f64],
    master_seed: u64,
    workers: usize,
) -> Result<HansonWrightReport> {
    let n = a.rows();
    if a.cols() != n || n == 0 {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.cols(),
        });
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    if delta_grid.iter().any(|d| !(*d > 0.0)) || delta_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "delta grid must be strictly positive and ascending".into(),
        ));
    }
    let trace: Complex64 = (0..n).map(|i| a.get(i, i)).sum();
    let a_norm = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| a.get(i, j).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let acc: Counts = par_fold(n_samples, workers, |s, acc: &mut Counts| {
        let mut rng = stream_rng(master_seed, s);
        let b: Vec<Complex64> = (0..n).map(|_| spec.family.sample(&mut rng)).collect();
        let mut x = -trace;
        for (j, bj) in b.iter().enumerate() {
            let mut row = Complex64::new(0.0, 0.0);
            for (k, bk) in b.iter().enumerate() {
                row += a.get(j, k) * bk.conj();
            }
            x += bj * row;
        }
        let ax = x.norm();
        if acc.0.len() < delta_grid.len() {
            acc.0.resize(delta_grid.len(), 0);
        }
        for (j, &d) in delta_grid.iter().enumerate() {
            if ax >= d {
                acc.0[j] += 1;
            }
        }
    })?;
    let ests: Vec<EstimateWithCI> = (0..delta_grid.len())
        .map(|j| tail_probability(acc.get(j), n_samples))
        .collect();
    let positive: Vec<(f64, f64)> = if a_norm > 0.0 {
        delta_grid
            .iter()
            .zip(&ests)
            .filter(|(_, e)| e.point > 0.0)
            .map(|(&d, e)| (hw_exponent(d, a_norm), (e.point / 4.0).ln()))
            .collect()
    } else {
        Vec::new()
    };
    let c_envelope = positive
        .iter()
        .map(|(g, l)| -l / g)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.min(c))));
    let c_lsq = if positive.is_empty() {
        None
    } else {
        let sgg: f64 = positive.iter().map(|p| p.0 * p.0).sum();
        let sgl: f64 = positive.iter().map(|p| p.0 * p.1).sum();
        Some(-sgl / sgg)
    };
    let rows: Vec<HansonWrightRow> = delta_grid
        .iter()
        .zip(&ests)
        .map(|(&d, e)| HansonWrightRow {
            delta: d,
            estimate: *e,
            bound: match c_envelope {
                Some(c) if a_norm > 0.0 => 4.0 * (-c * hw_exponent(d, a_norm)).exp(),
                _ => 4.0,
            },
        })
        .collect();
    let below_bound = rows.iter().all(|r| r.estimate.point <= r.bound * (1.0 + 1e-12));
    let non_increasing = rows.windows(2).all(|w| w[1].estimate.point <= w[0].estimate.point);
    Ok(HansonWrightReport {
        n,
        a_norm,
        rows,
        c_envelope,
        c_lsq,
        non_increasing,
        below_bound,
        n_samples,
    })
}

impl Report for HansonWrightReport {
    fn tables(&self) -> Vec<Table> {
        let mut t = Table::new(
            "hanson_wright",
            &["delta", "n_events", "p_exceed", "ci_lo", "ci_hi", "bound", "n_samples"],
        );
        for r in &self.rows {
            let mut row = vec![r.delta.into(), r.estimate.n_events.into()];
            row.extend(estimate_cells(&r.estimate));
            row.push(r.bound.into());
            row.push(self.n_samples.into());
            t.push(row);
        }
        vec![t]
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "a_norm": self.a_norm,
            "c_envelope": self.c_envelope,
            "c_lsq": self.c_lsq,
            "non_increasing": self.non_increasing,
            "below_bound": self.below_bound,
        })
    }
}

// First-order perturbation

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientStep {
    pub step: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub alpha: usize,
    pub i: usize,
    /// `|v_alpha(i)|^2 / sqrt(N)`.
    pub analytic: f64,
    pub steps: Vec<GradientStep>,
    /// Finite difference at the smallest step divided by `analytic`.
    pub constant: f64,
    /// `-log10` of the smallest relative error.
    pub agreement_digits: f64,
    pub skipped: Option<String>,
}

/// Compares central differences of `mu_alpha` in the diagonal variable
/// `x_ii` (with `h_ii = x_ii / sqrt(N)`) against `|v_alpha(i)|^2 / sqrt(N)`.
pub fn perturbation_gradient_check(
    h: &HermitianMatrix,
    alpha: usize,
    i: usize,
    step_grid: &[f64],
) -> Result<PerturbationReport> {
    let n = h.n();
    if alpha >= n {
        return Err(Error::IndexOutOfRange { index: alpha, n });
    }
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    if step_grid.is_empty() || step_grid.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    let dec = eigh(h, true)?;
    let mu = &dec.eigenvalues;
    let gap = [
        alpha.checked_sub(1).map(|b| mu[alpha] - mu[b]),
        mu.get(alpha + 1).map(|&x| x - mu[alpha]),
    ]
    .into_iter()
    .flatten()
    .fold(f64::INFINITY, f64::min);
    let v = dec.eigenvectors.as_ref().expect("requested").vector(alpha);
    let sqrt_n = (n as f64).sqrt();
    let analytic = v[i].norm_sqr() / sqrt_n;
    let threshold = 1e3 * dec.residual_bound.max(f64::EPSILON * dec.spectral_norm().max(1.0));
    if gap <= threshold {
        return Ok(PerturbationReport {
            alpha,
            i,
            analytic,
            steps: Vec::new(),
            constant: f64::NAN,
            agreement_digits: f64::NAN,
            skipped: Some(format!(
                "eigenvalue {alpha} is near-degenerate: gap {gap:.3e} <= {threshold:.3e}"
            )),
        });
    }
    let mut steps = Vec::with_capacity(step_grid.len());
    for &t in step_grid {
        let up = eigh(&h.with_diagonal_shift(i, t / sqrt_n), false)?.eigenvalues[alpha];
        let down = eigh(&h.with_diagonal_shift(i, -t / sqrt_n), false)?.eigenvalues[alpha];
        let fd = (up - down) / (2.0 * t);
        steps.push(GradientStep {
            step: t,
            finite_difference: fd,
            relative_error: (fd - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE),
        });
    }
    let smallest = steps
        .iter()
        .min_by(|a, b| a.step.total_cmp(&b.step))
        .expect("nonempty grid");
    let best = steps
        .iter()
        .map(|s| s.relative_error)
        .fold(f64::INFINITY, f64::min);
    Ok(PerturbationReport {
        alpha,
        i,
        analytic,
        constant: smallest.finite_difference / analytic,
        agreement_digits: -best.max(f64::MIN_POSITIVE).log10(),
        steps,
        skipped: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_wigner, OffDiagonalFamily};
    use crate::mc::Sampler;

    fn gue(n: usize, samples: u64, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            n,
            n_samples: samples,
            master_seed: seed,
            ..Default::default()
        }
    }

    #[test]
    fn unreachable_delta_gives_zero() {
        // |m - m_sc| <= 1/eta + |m_sc| < 2/eta.
        let eta = 0.5;
        let mut cfg = gue(16, 20, 1);
        cfg.grid = vec![eta];
        cfg.delta = 2.0 / eta;
        let r = semicircle_concentration(&cfg).unwrap();
        assert_eq!(r.stieltjes_rows[0].estimate.point, 0.0);
        assert_eq!(r.run.used, 20);
    }

    #[test]
    fn semicircle_header() {
        let mut cfg = gue(8, 4, 1);
        cfg.grid = vec![0.5];
        let r = semicircle_concentration(&cfg).unwrap();
        let csv = r.tables()[0].to_csv();
        assert!(csv.starts_with("eta,n_eta,p_exceed,ci_lo,ci_hi,n_samples\n"));
    }

    #[test]
    fn wegner_zero_counts_contribute_nothing() {
        let joint = vec![(vec![0, 0], 5u64), (vec![0, 2], 5)];
        let acc = moments_from_joint(&joint, 1, 2);
        assert_eq!(acc.n, 10);
        assert_eq!(acc.sum, 20.0);
        assert_eq!(moments_from_joint(&joint, 0, 2).sum, 0.0);
    }

    #[test]
    fn wegner_density_near_semicircle() {
        let mut cfg = gue(64, 3000, 4);
        cfg.sampler = Sampler::GueTridiagonal;
        cfg.grid = vec![0.5, 1.0];
        let r = wegner_moments(&cfg, 3.0).unwrap();
        let d = r.rows[1].density;
        assert!((d * std::f64::consts::PI - 1.0).abs() < 0.2, "{d}");
        assert!(r.ratio_ci.0 <= r.ratio && r.ratio <= r.ratio_ci.1);
    }

    #[test]
    fn repulsion_refuses_sparse_bins() {
        let mut cfg = gue(16, 10, 2);
        cfg.grid = vec![0.1, 0.2, 0.3];
        let r = repulsion_fit(&cfg).unwrap();
        assert!(r.fit.fit.is_err());
        assert!(r.fit.rows.iter().all(|row| !row.used_in_fit));
        let mut cfg = gue(16, 10, 2);
        cfg.grid = vec![0.5, 2.0];
        assert!(repulsion_fit(&cfg).is_err());
    }

    #[test]
    fn gap_tail_zero_is_one_and_monotone() {
        let mut cfg = gue(32, 300, 3);
        cfg.sampler = Sampler::GueTridiagonal;
        let r = gap_tail(&cfg).unwrap();
        assert_eq!(r.rows[0].x, 0.0);
        assert_eq!(r.rows[0].estimate.point, 1.0);
        assert!(r.non_increasing);
        assert_eq!(r.run.used + r.run.censored + r.run.failed, r.run.n_samples);
    }

    #[test]
    fn gap_censors_edge_energies() {
        let mut cfg = gue(4, 50, 3);
        cfg.kappa = 0.01;
        cfg.energy = 1.98;
        let r = gap_tail(&cfg).unwrap();
        assert!(r.run.censored > 0);
    }

    #[test]
    fn deloc_trivial_cases() {
        let cfg = gue(1, 5, 9);
        let wide = SpectralInterval::new(0.0, 100.0).unwrap();
        let r = delocalization_stats(&cfg, wide, 4.0).unwrap();
        assert_eq!(r.sup.max, 1.0);
        assert_eq!(r.sup.q05, 1.0);
        let r = delocalization_stats(&gue(24, 5, 9), wide, 2.0).unwrap();
        assert!(r.max_norm_defect < 1e-12);
        assert!((r.lp.max - 1.0).abs() < 1e-12 && (r.lp.q05 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_indices_window() {
        let xs = [-1.0, -0.2, 0.1, 0.15, 0.9];
        assert_eq!(nearest_indices(&xs, 0.0, 2), 2..4);
        assert_eq!(nearest_indices(&xs, 0.0, 3), 1..4);
        assert_eq!(nearest_indices(&xs, 5.0, 2), 3..5);
        assert_eq!(nearest_indices(&xs, -5.0, 9), 0..5);
    }

    #[test]
    fn xi_tail_total_at_large_delta() {
        let mut cfg = gue(12, 50, 5);
        cfg.grid = vec![0.1, 1.0, 100.0];
        let r = xi_lower_tail(&cfg, 4).unwrap();
        assert_eq!(r.rows[2].estimate.point, 1.0);
        let p: Vec<f64> = r.rows.iter().map(|x| x.estimate.point).collect();
        assert!(p.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn xi_mean_is_one() {
        let cfg = gue(32, 100, 6);
        let r = concentration(&cfg, 0.1).unwrap();
        assert!((r.xi_mean.point - 1.0).abs() < 0.05, "{:?}", r.xi_mean);
    }

    #[test]
    fn hanson_wright_zero_matrix() {
        let a = CMatrix::zeros(8, 8);
        let r = hanson_wright_trial(&a, &EntryDistributionSpec::gue(), 50, &[0.1, 1.0], 1, 1).unwrap();
        assert!(r.rows.iter().all(|row| row.estimate.n_events == 0));
        assert_eq!(r.c_envelope, None);
    }

    #[test]
    fn hanson_wright_identity_chi_square() {
        let n = 64;
        let a = CMatrix::from_fn(n, n, |i, j| {
            Complex64::new(if i == j { 1.0 / n as f64 } else { 0.0 }, 0.0)
        });
        let grid = [0.05, 0.1, 0.2, 0.3, 0.5, 1.0];
        let r = hanson_wright_trial(&a, &EntryDistributionSpec::gue(), 20_000, &grid, 2, 2).unwrap();
        assert!(r.rows[5].estimate.point <= 0.01);
        assert!(r.non_increasing && r.below_bound);
        assert!((r.a_norm - 1.0 / 8.0).abs() < 1e-15);
        // (||b||^2 - n) / n with ||b||^2 ~ Gamma(n, 1): P(|X| >= 0.1) from
        // the normal approximation with sd 1/8 is about 0.42.
        let p = r.rows[1].estimate.point;
        assert!((p - 0.42).abs() < 0.03, "{p}");
        assert!(r.c_envelope.unwrap() > 0.0);
    }

    #[test]
    fn perturbation_diagonal_matrix() {
        let h = HermitianMatrix::from_real_diagonal(&[0.3, -0.5, 0.9, 0.1]).unwrap();
        // Eigenvalue 0 (= -0.5) sits at entry 1.
        let r = perturbation_gradient_check(&h, 0, 1, &[1e-4]).unwrap();
        assert_eq!(r.analytic, 0.5);
        assert!((r.steps[0].finite_difference - 0.5).abs() < 1e-10);
        assert!((r.constant - 1.0).abs() < 1e-10);
    }

    #[test]
    fn perturbation_random_sample() {
        let n = 32;
        let h = sample_wigner(n, &EntryDistributionSpec::gue(), 77).unwrap();
        let mut total = 0.0;
        for i in 0..n {
            let r = perturbation_gradient_check(&h, 10, i, &[1e-5]).unwrap();
            assert!(r.skipped.is_none());
            total += r.analytic;
            if r.analytic > 1e-4 {
                assert!(r.steps[0].relative_error < 1e-4, "i={i}: {:?}", r.steps[0]);
            }
        }
        assert!((total - 1.0 / (n as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn perturbation_skips_degenerate() {
        let h = HermitianMatrix::from_real_diagonal(&[0.2, 0.2, 1.0]).unwrap();
        let r = perturbation_gradient_check(&h, 0, 0, &[1e-5]).unwrap();
        assert!(r.skipped.is_some());
    }

    #[test]
    fn bounded_family_runs() {
        let mut cfg = gue(16, 20, 8);
        cfg.spec.family = OffDiagonalFamily::RadialUniform;
        cfg.grid = vec![0.5, 1.0];
        assert!(wegner_moments(&cfg, 3.0).is_ok());
    }
}
