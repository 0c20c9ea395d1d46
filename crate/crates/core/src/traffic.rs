//! Area discretization and spatially correlated log-normal traffic fields.
//!
//! The log-field is a stationary Gaussian process with exponential covariance
//! `exp(-spread * d)`, sampled exactly on the grid by circulant embedding.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

const TRAFFIC_STREAM: u64 = 0x7472_6166;

/// Square target area sampled at cell centers, row-major with `x` varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaGrid {
    extent_m: f64,
    n_side: usize,
    centers: Vec<Point>,
    cell_area: f64,
}

impl AreaGrid {
    pub fn extent_m(&self) -> f64 {
        self.extent_m
    }

    pub fn n_side(&self) -> usize {
        self.n_side
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    pub fn cell_side(&self) -> f64 {
        self.extent_m / self.n_side as f64
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Clamps a point into the area.
    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.extent_m), p.y.clamp(0.0, self.extent_m))
    }
}

pub fn build_grid(extent_m: f64, n_side: usize) -> Result<AreaGrid> {
    if !(extent_m > 0.0 && extent_m.is_finite()) {
        return Err(Error::invalid(format!("extent must be positive, got {extent_m}")));
    }
    if n_side < 2 {
        return Err(Error::invalid(format!("n_side must be at least 2, got {n_side}")));
    }
    let side = extent_m / n_side as f64;
    let mut centers = Vec::with_capacity(n_side * n_side);
    for j in 0..n_side {
        for i in 0..n_side {
            centers.push(Point::new((i as f64 + 0.5) * side, (j as f64 + 0.5) * side));
        }
    }
    Ok(AreaGrid {
        extent_m,
        n_side,
        centers,
        cell_area: side * side,
    })
}

/// Parameters of a normalized log-normal traffic field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub mu_location: f64,
    pub sigma_scale: f64,
    /// Correlation decay of the log-field, 1/m.
    pub spread: f64,
    /// Total traffic volume, bit/s.
    pub d_tot: f64,
}

impl TrafficProfile {
    pub fn urban(d_tot: f64) -> Self {
        TrafficProfile {
            mu_location: 19.0,
            sigma_scale: 2.4,
            spread: 0.003,
            d_tot,
        }
    }

    pub fn rural(d_tot: f64) -> Self {
        TrafficProfile {
            mu_location: 19.0,
            sigma_scale: 2.8,
            spread: 0.0012,
            d_tot,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_scale > 0.0) {
            return Err(Error::invalid("sigma_scale must be positive"));
        }
        if !(self.spread > 0.0) {
            return Err(Error::invalid("spread must be positive"));
        }
        if !(self.d_tot > 0.0 && self.d_tot.is_finite()) {
            return Err(Error::invalid("d_tot must be positive"));
        }
        if !self.mu_location.is_finite() {
            return Err(Error::invalid("mu_location must be finite"));
        }
        Ok(())
    }
}

/// Per-cell traffic demand in bit/s.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficField {
    values: Vec<f64>,
    d_tot: f64,
    d_lmax: f64,
}

impl TrafficField {
    /// Wraps explicit per-cell demands. Values must be finite, non-negative and not all zero.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("traffic values must be finite and non-negative"));
        }
        let d_tot: f64 = values.iter().sum();
        if d_tot <= 0.0 {
            return Err(Error::invalid("traffic field has zero total"));
        }
        let d_lmax = values.iter().copied().fold(0.0, f64::max);
        Ok(TrafficField { values, d_tot, d_lmax })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn d_tot(&self) -> f64 {
        self.d_tot
    }

    pub fn d_lmax(&self) -> f64 {
        self.d_lmax
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the highest-demand cell (first one on ties).
    pub fn peak_cell(&self) -> usize {
        let mut best = 0;
        for (q, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = q;
            }
        }
        best
    }
}

pub fn synth_traffic(grid: &AreaGrid, profile: &TrafficProfile, seed: u64) -> Result<TrafficField> {
    profile.validate()?;
    let z = gaussian_field(grid, profile.spread, seed);
    let z_max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // exp(mu + sigma z) up to a constant factor that the normalization removes.
    let weights: Vec<f64> = z.iter().map(|&v| (profile.sigma_scale * (v - z_max)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let values: Vec<f64> = weights.iter().map(|w| profile.d_tot * w / total).collect();
    let d_lmax = values.iter().copied().fold(0.0, f64::max);
    Ok(TrafficField {
        values,
        d_tot: profile.d_tot,
        d_lmax,
    })
}

/// Sums a per-cell field over the area.
pub fn integrate(values: &[f64], grid: &AreaGrid) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::invalid(format!(
            "field has {} cells, grid has {}",
            values.len(),
            grid.len()
        )));
    }
    Ok(values.iter().sum())
}

/// Unit-variance Gaussian field with covariance `exp(-spread * d)` at the grid centers.
pub fn gaussian_field(grid: &AreaGrid, spread: f64, seed: u64) -> Vec<f64> {
    let n = grid.n_side();
    let m = 2 * n;
    let side = grid.cell_side();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);

    let mut spectrum: Vec<Complex64> = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            let dx = i.min(m - i) as f64 * side;
            let dy = j.min(m - j) as f64 * side;
            spectrum.push(Complex64::new((-spread * dx.hypot(dy)).exp(), 0.0));
        }
    }
    fft2(&mut spectrum, m, fft.as_ref());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TRAFFIC_STREAM);
    let scale = 1.0 / (m * m) as f64;
    for c in spectrum.iter_mut() {
        // Eigenvalues of the embedded covariance; tiny negative ones are round-off.
        let amp = (c.re.max(0.0) * scale).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *c = Complex64::new(amp * re, amp * im);
    }
    fft2(&mut spectrum, m, fft.as_ref());

    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(spectrum[j * m + i].re);
        }
    }
    out
}

fn fft2(data: &mut [Complex64], m: usize, fft: &dyn Fft<f64>) {
    for row in data.chunks_exact_mut(m) {
        fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..m {
        for j in 0..m {
            column[j] = data[j * m + i];
        }
        fft.process(&mut column);
        for j in 0..m {
            data[j * m + i] = column[j];
        }
    }
}
