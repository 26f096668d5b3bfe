//! Tail estimation for the stationary law: fine 1-D occupation histograms
//! for the gap and velocity, and log-survival regressions against the
//! transforms the tail sandwiches are stated in (linear in x for the gap,
//! quadratic in the shifted velocity).
//!
//! Uncertainty comes from disjoint cycle sub-batches: each sub-batch yields
//! its own survival curve and slope, and the spread of the sub-batch slopes
//! gives the confidence interval.

use crate::measure::MeasureError;
use crate::model::ModelParams;
use crate::stats::{self, StatsError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TailError {
    #[error("invalid tail grid: {0}")]
    InvalidGrid(String),
    #[error("insufficient tail mass: {0}")]
    InsufficientTail(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Uniform 1-D grid on [lo, hi] with under/overflow cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl TailGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self, TailError> {
        if !(hi > lo) || n == 0 {
            return Err(TailError::InvalidGrid(format!("[{lo}, {hi}] x {n}")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / self.n as f64
    }
}

#[derive(Debug, Clone)]
pub struct TailHist {
    pub grid: TailGrid,
    mass: Vec<f64>,
    under: f64,
    over: f64,
}

impl TailHist {
    pub fn new(grid: TailGrid) -> Self {
        Self { grid, mass: vec![0.0; grid.n], under: 0.0, over: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, x: f64, w: f64) {
        if x < self.grid.lo {
            self.under += w;
        } else if x >= self.grid.hi {
            self.over += w;
        } else {
            let i = ((x - self.grid.lo) / (self.grid.hi - self.grid.lo) * self.grid.n as f64)
                as usize;
            self.mass[i.min(self.grid.n - 1)] += w;
        }
    }

    pub fn total(&self) -> f64 {
        self.under + self.over + self.mass.iter().sum::<f64>()
    }

    /// Survival value at bin edge `i`: mass at or above `edge(i)` over total.
    pub fn survival_at_edge(&self, i: usize) -> f64 {
        let above: f64 = self.mass[i..].iter().sum::<f64>() + self.over;
        let t = self.total();
        if t > 0.0 {
            above / t
        } else {
            0.0
        }
    }

    fn merge(&mut self, other: &Self) -> Result<(), TailError> {
        if self.grid != other.grid {
            return Err(TailError::InvalidGrid("merge of mismatched tail grids".into()));
        }
        for (a, b) in self.mass.iter_mut().zip(&other.mass) {
            *a += b;
        }
        self.under += other.under;
        self.over += other.over;
        Ok(())
    }

    pub(crate) fn bulk_add(&mut self, mass: &[f64], touched: &[u32], under: f64, over: f64) {
        for &k in touched {
            self.mass[k as usize] += mass[k as usize];
        }
        self.under += under;
        self.over += over;
    }
}

/// Grids for the two tail axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailGrids {
    pub gap: TailGrid,
    pub velocity: TailGrid,
}

/// Sub-batched tail occupation: one gap histogram and one velocity histogram
/// per cycle sub-batch, plus their pooled totals.
#[derive(Debug, Clone)]
pub struct TailAccumulator {
    pub grids: TailGrids,
    gap: Vec<TailHist>,
    velocity: Vec<TailHist>,
}

impl TailAccumulator {
    pub fn new(grids: TailGrids, n_batches: usize) -> Self {
        let n = n_batches.max(2);
        Self {
            grids,
            gap: (0..n).map(|_| TailHist::new(grids.gap)).collect(),
            velocity: (0..n).map(|_| TailHist::new(grids.velocity)).collect(),
        }
    }

    pub fn n_batches(&self) -> usize {
        self.gap.len()
    }

    #[inline]
    pub fn add(&mut self, batch: usize, h: f64, v: f64, w: f64) {
        let b = batch % self.gap.len();
        self.gap[b].add(h, w);
        self.velocity[b].add(v, w);
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), TailError> {
        if self.grids != other.grids || self.gap.len() != other.gap.len() {
            return Err(TailError::InvalidGrid("merge of mismatched accumulators".into()));
        }
        for (a, b) in self.gap.iter_mut().zip(&other.gap) {
            a.merge(b)?;
        }
        for (a, b) in self.velocity.iter_mut().zip(&other.velocity) {
            a.merge(b)?;
        }
        Ok(())
    }

    pub(crate) fn commit_gap(
        &mut self,
        batch: usize,
        mass: &[f64],
        touched: &[u32],
        under: f64,
        over: f64,
    ) {
        let b = batch % self.gap.len();
        self.gap[b].bulk_add(mass, touched, under, over);
    }

    pub(crate) fn commit_velocity(
        &mut self,
        batch: usize,
        mass: &[f64],
        touched: &[u32],
        under: f64,
        over: f64,
    ) {
        let b = batch % self.velocity.len();
        self.velocity[b].bulk_add(mass, touched, under, over);
    }

    fn pooled(hists: &[TailHist]) -> TailHist {
        let mut total = TailHist::new(hists[0].grid);
        for h in hists {
            total.merge(h).expect("pooled merge shares the grid");
        }
        total
    }

    pub fn pooled_gap(&self) -> TailHist {
        Self::pooled(&self.gap)
    }

    pub fn pooled_velocity(&self) -> TailHist {
        Self::pooled(&self.velocity)
    }
}

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailAxis {
    Gap,
    Velocity,
}

/// Abscissa the log-survival is regressed on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TailTransform {
    /// u = x (exponential tail)
    Linear,
    /// u = (y + shift)^2 (Gaussian tail in the shifted variable)
    QuadraticShifted { shift: f64 },
}

impl TailTransform {
    #[inline]
    pub fn apply(&self, y: f64) -> f64 {
        match self {
            TailTransform::Linear => y,
            TailTransform::QuadraticShifted { shift } => (y + shift) * (y + shift),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    pub axis: TailAxis,
    pub transform: TailTransform,
    /// Slope of log-survival against the transformed abscissa.
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence interval for the slope from sub-batch spread.
    pub ci: (f64, f64),
    /// Abscissa range (original units) the fit used.
    pub fit_range: (f64, f64),
    /// Independent cycles contributing mass above the lower fit edge.
    pub n_effective: u64,
    /// (y, pooled survival) evaluation points of the fit.
    pub curve: Vec<(f64, f64)>,
}

/// Fit of log pi(V > y) against (y + g/(1+gamma))^2 on the survival window
/// `quantile_range` (upper-tail probabilities, e.g. (3e-4, 3e-2)).
pub fn fit_velocity_tail(
    batch: &crate::renewal::CycleBatch,
    params: &ModelParams,
    quantile_range: (f64, f64),
) -> Result<TailFit, TailError> {
    let acc = batch
        .tails
        .as_ref()
        .ok_or_else(|| TailError::InsufficientTail("batch collected no tail histograms".into()))?;
    let shift = -params.renewal_velocity();
    let n_eff = |y_lo: f64| batch.cycles.iter().filter(|c| c.max_v >= y_lo).count() as u64;
    fit_from_hists(
        &acc.velocity,
        TailAxis::Velocity,
        TailTransform::QuadraticShifted { shift },
        quantile_range,
        n_eff,
    )
}

/// Fit of log pi(H > x) against x on the survival window `quantile_range`.
pub fn fit_gap_tail(
    batch: &crate::renewal::CycleBatch,
    params: &ModelParams,
    quantile_range: (f64, f64),
) -> Result<TailFit, TailError> {
    let _ = params;
    let acc = batch
        .tails
        .as_ref()
        .ok_or_else(|| TailError::InsufficientTail("batch collected no tail histograms".into()))?;
    let n_eff = |x_lo: f64| batch.cycles.iter().filter(|c| c.max_h >= x_lo).count() as u64;
    fit_from_hists(&acc.gap, TailAxis::Gap, TailTransform::Linear, quantile_range, n_eff)
}

/// Tail fit on raw samples (positive controls): the samples are interleaved
/// into sub-batches and handled exactly like occupation histograms.
pub fn fit_tail_from_samples(
    samples: &[f64],
    transform: TailTransform,
    quantile_range: (f64, f64),
    n_batches: usize,
) -> Result<TailFit, TailError> {
    if samples.len() < 100 {
        return Err(TailError::InsufficientTail(format!("{} samples", samples.len())));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let grid = TailGrid::new(lo, hi + 1e-9 * span, 2048)?;
    let n = n_batches.max(2);
    let mut hists: Vec<TailHist> = (0..n).map(|_| TailHist::new(grid)).collect();
    for (i, &x) in samples.iter().enumerate() {
        hists[i % n].add(x, 1.0);
    }
    // every raw sample above the fit edge is an independent unit
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN sample"));
    fit_from_hists(&hists, TailAxis::Gap, transform, quantile_range, move |y_lo| {
        (sorted.len() - sorted.partition_point(|&x| x < y_lo)) as u64
    })
}

fn fit_from_hists<F: Fn(f64) -> u64>(
    hists: &[TailHist],
    axis: TailAxis,
    transform: TailTransform,
    quantile_range: (f64, f64),
    n_effective_at: F,
) -> Result<TailFit, TailError> {
    let (q_lo, q_hi) = quantile_range;
    if !(q_lo > 0.0 && q_hi > q_lo && q_hi < 0.5) {
        return Err(TailError::InsufficientTail(format!(
            "bad survival window ({q_lo}, {q_hi})"
        )));
    }
    let pooled = TailAccumulator::pooled_slice(hists);
    let grid = pooled.grid;

    // candidate edges whose pooled survival falls inside the window
    let mut cand: Vec<(usize, f64)> = Vec::new();
    for i in 0..=grid.n {
        let s = if i == grid.n { 0.0 } else { pooled.survival_at_edge(i) };
        if s >= q_lo && s <= q_hi {
            cand.push((i, s));
        }
    }
    if cand.len() < 3 {
        return Err(TailError::InsufficientTail(format!(
            "only {} edges inside survival window ({q_lo}, {q_hi})",
            cand.len()
        )));
    }
    // thin to at most 12 points, evenly over the candidate list
    let k = cand.len().min(12);
    let picks: Vec<(usize, f64)> =
        (0..k).map(|j| cand[j * (cand.len() - 1) / (k - 1).max(1)]).collect();

    let ys: Vec<f64> = picks.iter().map(|&(i, _)| grid.edge(i)).collect();
    let us: Vec<f64> = ys.iter().map(|&y| transform.apply(y)).collect();
    let curve: Vec<(f64, f64)> = picks.iter().map(|&(i, s)| (grid.edge(i), s)).collect();

    // per sub-batch slope
    let mut slopes = Vec::with_capacity(hists.len());
    for h in hists {
        let mut xs = Vec::new();
        let mut logs = Vec::new();
        for (&(i, _), &u) in picks.iter().zip(&us) {
            let s = h.survival_at_edge(i);
            if s > 0.0 {
                xs.push(u);
                logs.push(s.ln());
            }
        }
        if xs.len() >= 3 {
            if let Ok(fit) = stats::ols_fit(&xs, &logs) {
                slopes.push(fit.slope);
            }
        }
    }
    if slopes.len() < 2 {
        return Err(TailError::InsufficientTail(
            "too few sub-batches with tail mass to estimate uncertainty".into(),
        ));
    }
    let slope = stats::mean(&slopes);
    let se = stats::sd(&slopes) / (slopes.len() as f64).sqrt();
    let tcrit = stats::t_critical_95(slopes.len() as u64 - 1);
    let pooled_logs: Vec<f64> = picks.iter().map(|&(_, s)| s.ln()).collect();
    let pooled_fit = stats::ols_fit(&us, &pooled_logs)?;
    let n_effective = n_effective_at(ys[0]);
    if n_effective < 200 {
        return Err(TailError::InsufficientTail(format!(
            "n_effective = {n_effective} < 200 above fit edge {:.4}",
            ys[0]
        )));
    }
    Ok(TailFit {
        axis,
        transform,
        slope,
        intercept: pooled_fit.intercept,
        ci: (slope - tcrit * se, slope + tcrit * se),
        fit_range: (ys[0], *ys.last().expect("nonempty picks")),
        n_effective,
        curve,
    })
}

impl TailAccumulator {
    fn pooled_slice(hists: &[TailHist]) -> TailHist {
        let mut total = TailHist::new(hists[0].grid);
        for h in hists {
            total.merge(h).expect("pooled merge shares the grid");
        }
        total
    }
}
