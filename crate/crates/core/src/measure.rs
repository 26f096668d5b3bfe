//! Binned occupation / probability measures on (gap, velocity) space.
//!
//! Measures are mergeable monoids: bin-wise sums of time mass, normalized
//! only at the point of use. Total variation on a fixed binning is half the
//! L1 distance over bins plus the overflow discrepancy; it equals the sup
//! over unions of bins and is therefore a lower bound on the continuum TV.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("binning mismatch between measures")]
    BinningMismatch,
    #[error("measure holds no mass")]
    Empty,
    #[error("coarsening factor must divide the grid ({0})")]
    BadCoarsening(String),
}

/// Uniform 2-D grid on [0, h_max] x [v_min, v_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub h_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub nh: usize,
    pub nv: usize,
}

impl GridSpec {
    pub fn new(h_max: f64, v_min: f64, v_max: f64, nh: usize, nv: usize) -> Result<Self, MeasureError> {
        if !(h_max > 0.0) || !(v_max > v_min) || nh == 0 || nv == 0 {
            return Err(MeasureError::InvalidGrid(format!(
                "h_max={h_max}, v=[{v_min},{v_max}], nh={nh}, nv={nv}"
            )));
        }
        Ok(Self { h_max, v_min, v_max, nh, nv })
    }

    #[inline]
    fn index(&self, h: f64, v: f64) -> Option<usize> {
        if h < 0.0 || h > self.h_max || v < self.v_min || v > self.v_max {
            return None;
        }
        let i = ((h / self.h_max) * self.nh as f64) as usize;
        let j = (((v - self.v_min) / (self.v_max - self.v_min)) * self.nv as f64) as usize;
        let i = i.min(self.nh - 1);
        let j = j.min(self.nv - 1);
        Some(i * self.nv + j)
    }

    pub fn h_edges(&self) -> Vec<f64> {
        (0..=self.nh).map(|i| self.h_max * i as f64 / self.nh as f64).collect()
    }

    pub fn v_edges(&self) -> Vec<f64> {
        (0..=self.nv)
            .map(|j| self.v_min + (self.v_max - self.v_min) * j as f64 / self.nv as f64)
            .collect()
    }
}

/// Occupation mass on a [`GridSpec`], plus a scalar overflow cell for
/// everything landing outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub grid: GridSpec,
    mass: Vec<f64>,
    overflow: f64,
}

impl EmpiricalMeasure {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid, mass: vec![0.0; grid.nh * grid.nv], overflow: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, h: f64, v: f64, weight: f64) {
        match self.grid.index(h, v) {
            Some(k) => self.mass[k] += weight,
            None => self.overflow += weight,
        }
    }

    /// Mass landing outside the grid, recorded without a location.
    #[inline]
    pub fn add_overflow(&mut self, weight: f64) {
        self.overflow += weight;
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.overflow
    }

    pub fn overflow_mass(&self) -> f64 {
        self.overflow
    }

    pub fn overflow_fraction(&self) -> f64 {
        let t = self.total_mass();
        if t > 0.0 {
            self.overflow / t
        } else {
            0.0
        }
    }

    pub fn bin_mass(&self) -> &[f64] {
        &self.mass
    }

    /// Probability-normalized copy (total mass including overflow becomes 1).
    pub fn normalized(&self) -> Result<Self, MeasureError> {
        let t = self.total_mass();
        if !(t > 0.0) {
            return Err(MeasureError::Empty);
        }
        let mut out = self.clone();
        for m in &mut out.mass {
            *m /= t;
        }
        out.overflow /= t;
        Ok(out)
    }

    /// Bin-wise addition; both sides must share the binning exactly.
    pub fn merge(&mut self, other: &Self) -> Result<(), MeasureError> {
        if self.grid != other.grid {
            return Err(MeasureError::BinningMismatch);
        }
        for (a, b) in self.mass.iter_mut().zip(&other.mass) {
            *a += b;
        }
        self.overflow += other.overflow;
        Ok(())
    }

    /// Exact rebinning onto a grid coarser by integer factors.
    pub fn coarsen(&self, factor_h: usize, factor_v: usize) -> Result<Self, MeasureError> {
        if factor_h == 0
            || factor_v == 0
            || self.grid.nh % factor_h != 0
            || self.grid.nv % factor_v != 0
        {
            return Err(MeasureError::BadCoarsening(format!("({factor_h}, {factor_v})")));
        }
        let grid = GridSpec {
            nh: self.grid.nh / factor_h,
            nv: self.grid.nv / factor_v,
            ..self.grid
        };
        let mut out = EmpiricalMeasure::new(grid);
        for i in 0..self.grid.nh {
            for j in 0..self.grid.nv {
                out.mass[(i / factor_h) * grid.nv + (j / factor_v)] +=
                    self.mass[i * self.grid.nv + j];
            }
        }
        out.overflow = self.overflow;
        Ok(out)
    }

    /// Mean of a function of the bin centers under the normalized measure.
    /// Overflow mass is ignored (caller should check it is small).
    pub fn grid_mean<F: Fn(f64, f64) -> f64>(&self, f: F) -> Result<f64, MeasureError> {
        let t = self.total_mass();
        if !(t > 0.0) {
            return Err(MeasureError::Empty);
        }
        let dh = self.grid.h_max / self.grid.nh as f64;
        let dv = (self.grid.v_max - self.grid.v_min) / self.grid.nv as f64;
        let mut sum = 0.0;
        for i in 0..self.grid.nh {
            let hc = (i as f64 + 0.5) * dh;
            for j in 0..self.grid.nv {
                let vc = self.grid.v_min + (j as f64 + 0.5) * dv;
                sum += f(hc, vc) * self.mass[i * self.grid.nv + j];
            }
        }
        Ok(sum / t)
    }

    /// CSV export: metadata header lines prefixed with '#', then
    /// `h_lo,h_hi,v_lo,v_hi,mass` rows for occupied bins.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, meta: &[(&str, String)]) -> std::io::Result<()> {
        for (k, v) in meta {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "# overflow = {:.16e}", self.overflow)?;
        let he = self.grid.h_edges();
        let ve = self.grid.v_edges();
        writeln!(w, "h_lo,h_hi,v_lo,v_hi,mass")?;
        for i in 0..self.grid.nh {
            for j in 0..self.grid.nv {
                let m = self.mass[i * self.grid.nv + j];
                if m != 0.0 {
                    writeln!(
                        w,
                        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                        he[i],
                        he[i + 1],
                        ve[j],
                        ve[j + 1],
                        m
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Half-L1 distance over bins plus overflow discrepancy, on probability-
/// normalized inputs.
pub fn tv_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64, MeasureError> {
    if mu.grid != nu.grid {
        return Err(MeasureError::BinningMismatch);
    }
    let p = mu.normalized()?;
    let q = nu.normalized()?;
    let mut l1 = (p.overflow - q.overflow).abs();
    for (a, b) in p.mass.iter().zip(&q.mass) {
        l1 += (a - b).abs();
    }
    Ok(0.5 * l1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(4.0, -1.0, 1.0, 8, 8).unwrap()
    }

    #[test]
    fn mass_lands_in_bins_and_overflow() {
        let mut m = EmpiricalMeasure::new(grid());
        m.add(0.1, 0.0, 1.0);
        m.add(5.0, 0.0, 0.25); // h beyond grid
        m.add(1.0, -3.0, 0.25); // v below grid
        assert_eq!(m.total_mass(), 1.5);
        assert_eq!(m.overflow_mass(), 0.5);
        let n = m.normalized().unwrap();
        assert!((n.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tv_of_identical_measures_is_zero() {
        let mut m = EmpiricalMeasure::new(grid());
        m.add(0.5, 0.5, 2.0);
        m.add(1.5, -0.5, 1.0);
        assert_eq!(tv_distance(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn tv_of_disjoint_measures_is_one() {
        let mut a = EmpiricalMeasure::new(grid());
        let mut b = EmpiricalMeasure::new(grid());
        a.add(0.1, -0.9, 1.0);
        b.add(3.9, 0.9, 1.0);
        assert!((tv_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tv_half_mass_shift() {
        // mu uniform on two bins, nu all on the first: TV = 0.5
        let mut a = EmpiricalMeasure::new(grid());
        let mut b = EmpiricalMeasure::new(grid());
        a.add(0.1, 0.1, 0.5);
        a.add(1.1, 0.1, 0.5);
        b.add(0.1, 0.1, 1.0);
        assert!((tv_distance(&a, &b).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tv_is_a_metric_on_probes() {
        let noise = crate::noise::NoiseSource::new(5, 5);
        let mk = |salt: u64| {
            let mut m = EmpiricalMeasure::new(grid());
            for i in 0..200 {
                let h = 4.0 * noise.uniform(salt * 1000 + i);
                let v = 2.0 * noise.uniform(salt * 1000 + 500 + i) - 1.0;
                m.add(h, v, noise.uniform(salt * 7919 + i));
            }
            m
        };
        let (a, b, c) = (mk(1), mk(2), mk(3));
        let dab = tv_distance(&a, &b).unwrap();
        let dba = tv_distance(&b, &a).unwrap();
        let dac = tv_distance(&a, &c).unwrap();
        let dcb = tv_distance(&c, &b).unwrap();
        assert_eq!(dab, dba);
        assert!(dab >= 0.0 && dab <= 1.0);
        assert!(dab <= dac + dcb + 1e-15, "triangle inequality failed");
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn binning_mismatch_rejected() {
        let a = EmpiricalMeasure::new(grid());
        let b = EmpiricalMeasure::new(GridSpec::new(4.0, -1.0, 1.0, 8, 16).unwrap());
        assert!(matches!(tv_distance(&a, &b), Err(MeasureError::BinningMismatch)));
    }

    #[test]
    fn merge_adds_before_normalization() {
        let mut a = EmpiricalMeasure::new(grid());
        let mut b = EmpiricalMeasure::new(grid());
        a.add(0.1, 0.1, 1.0);
        b.add(0.1, 0.1, 2.0);
        b.add(2.1, 0.3, 1.0);
        a.merge(&b).unwrap();
        assert_eq!(a.total_mass(), 4.0);
    }

    #[test]
    fn coarsen_preserves_mass() {
        let mut a = EmpiricalMeasure::new(grid());
        for i in 0..64 {
            a.add(4.0 * (i as f64 + 0.5) / 64.0, 0.3, 1.0);
        }
        a.add(9.0, 9.0, 0.5);
        let c = a.coarsen(4, 2).unwrap();
        assert_eq!(c.grid.nh, 2);
        assert_eq!(c.grid.nv, 4);
        assert!((c.total_mass() - a.total_mass()).abs() < 1e-12);
        assert!(a.coarsen(3, 2).is_err());
    }
}
