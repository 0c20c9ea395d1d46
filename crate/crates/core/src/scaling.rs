//! Sweeps over BS and RIS counts, empirical scaling fits and the order-wise
//! IREE model overlaid on measured surfaces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{capacity_field, CapacityKind};
use crate::error::{Error, Result};
use crate::metrics::Metrics;
use crate::solver::{optimize, Scenario, SolverConfig};

/// One optimize run inside a sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub seed: u64,
    pub metrics: Metrics,
    /// `|| C_S / sum C_S - D / D_tot ||_2` of the final deployment.
    pub ua_residual: f64,
    /// Largest single-cell traffic of the run's field.
    pub d_lmax: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n_bs: usize,
    pub n_ris: usize,
    pub runs: Vec<SweepRun>,
    /// Field-wise mean over runs.
    pub mean: Metrics,
    pub ua_residual: f64,
}

impl SweepCell {
    pub fn all_converged(&self) -> bool {
        self.runs.iter().all(|r| r.converged)
    }
}

/// Metrics over a rectangular grid of `(n_bs, n_ris)` values, BS-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSurface {
    pub bs_values: Vec<usize>,
    pub ris_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub cells: Vec<SweepCell>,
}

impl ScalingSurface {
    pub fn cell(&self, i: usize, j: usize) -> &SweepCell {
        &self.cells[i * self.ris_values.len() + j]
    }

    fn position(&self, n_bs: usize, n_ris: usize) -> Result<(usize, usize)> {
        let i = self.bs_values.iter().position(|&v| v == n_bs);
        let j = self.ris_values.iter().position(|&v| v == n_ris);
        match (i, j) {
            (Some(i), Some(j)) => Ok((i, j)),
            _ => Err(Error::invalid(format!("({n_bs}, {n_ris}) is not on the surface"))),
        }
    }

    /// Builds a surface from already averaged cells, e.g. for synthetic checks.
    pub fn from_means(bs_values: Vec<usize>, ris_values: Vec<usize>, means: Vec<Metrics>) -> Result<Self> {
        if means.len() != bs_values.len() * ris_values.len() {
            return Err(Error::invalid("surface needs one cell per value pair"));
        }
        let cells = means
            .into_iter()
            .enumerate()
            .map(|(k, mean)| SweepCell {
                n_bs: bs_values[k / ris_values.len()],
                n_ris: ris_values[k % ris_values.len()],
                runs: Vec::new(),
                mean,
                ua_residual: f64::NAN,
            })
            .collect();
        Ok(ScalingSurface {
            bs_values,
            ris_values,
            seeds: Vec::new(),
            cells,
        })
    }
}

/// Normalized-field distance between the lower-bound capacity and the traffic.
pub fn ua_residual(cap: &[f64], traffic: &[f64]) -> Result<f64> {
    let c: f64 = cap.iter().sum();
    let d: f64 = traffic.iter().sum();
    if cap.len() != traffic.len() || !(c > 0.0) || !(d > 0.0) {
        return Err(Error::UndefinedMismatch("residual needs positive totals".into()));
    }
    Ok(cap
        .iter()
        .zip(traffic)
        .map(|(a, b)| (a / c - b / d).powi(2))
        .sum::<f64>()
        .sqrt())
}

fn run_cell(scenario: &Scenario, config: &SolverConfig) -> Result<SweepRun> {
    let trace = optimize(scenario, config)?;
    let cap = capacity_field(
        &trace.deployment,
        &scenario.grid,
        &scenario.propagation,
        &scenario.power,
        scenario.seed,
        CapacityKind::LowerBound,
    )?;
    let ua = ua_residual(cap.values(), scenario.traffic.values()).unwrap_or(f64::NAN);
    Ok(SweepRun {
        seed: scenario.seed,
        metrics: trace.metrics,
        ua_residual: ua,
        d_lmax: scenario.traffic.d_lmax(),
        converged: trace.converged,
    })
}

/// Optimizes every `(n_bs, n_ris, seed)` combination. `make` builds the scenario
/// of one seed; the counts are then overridden per cell. Jobs run in parallel and
/// are assembled in a fixed order.
pub fn sweep<F>(
    make: F,
    bs_values: &[usize],
    ris_values: &[usize],
    seeds: &[u64],
    config: &SolverConfig,
) -> Result<ScalingSurface>
where
    F: Fn(u64) -> Result<Scenario> + Sync,
{
    if bs_values.is_empty() || ris_values.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("sweep needs at least one value per axis and one seed"));
    }
    let bases: Vec<Scenario> = seeds.iter().map(|&s| make(s)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize, usize)> = (0..bs_values.len())
        .flat_map(|i| (0..ris_values.len()).flat_map(move |j| (0..seeds.len()).map(move |k| (i, j, k))))
        .collect();
    let runs: Vec<SweepRun> = jobs
        .par_iter()
        .map(|&(i, j, k)| run_cell(&bases[k].with_counts(bs_values[i], ris_values[j]), config))
        .collect::<Result<_>>()?;
    let cells = runs
        .chunks(seeds.len())
        .enumerate()
        .map(|(c, chunk)| {
            let ua: Vec<f64> = chunk.iter().map(|r| r.ua_residual).collect();
            SweepCell {
                n_bs: bs_values[c / ris_values.len()],
                n_ris: ris_values[c % ris_values.len()],
                runs: chunk.to_vec(),
                mean: Metrics::mean(&chunk.iter().map(|r| r.metrics).collect::<Vec<_>>()).unwrap(),
                ua_residual: ua.iter().sum::<f64>() / ua.len() as f64,
            }
        })
        .collect();
    Ok(ScalingSurface {
        bs_values: bs_values.to_vec(),
        ris_values: ris_values.to_vec(),
        seeds: seeds.to_vec(),
        cells,
    })
}

/// Least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("line fit needs at least two paired points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("line fit needs distinct abscissae"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-24 * my.abs().max(1.0) {
        1.0
    } else {
        0.0
    };
    Ok(LineFit { intercept, slope, r2 })
}

/// `C_Tot = a + b log2(N_BS)` along the BS axis at a fixed RIS count.
pub fn fit_capacity_law(surface: &ScalingSurface, n_ris: usize) -> Result<LineFit> {
    if surface.bs_values.len() < 3 {
        return Err(Error::invalid("capacity fit needs at least three BS counts"));
    }
    let (_, j) = surface.position(surface.bs_values[0], n_ris)?;
    let x: Vec<f64> = surface.bs_values.iter().map(|&n| (n as f64).log2()).collect();
    let y: Vec<f64> = (0..surface.bs_values.len())
        .map(|i| surface.cell(i, j).mean.c_tot)
        .collect();
    fit_line(&x, &y)
}

/// Decay orders of the mismatch: `xi ~ N_BS^-p_bs` and `xi ~ exp(-rate_ris N_R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JsOrders {
    pub p_bs: f64,
    pub r2_bs: f64,
    pub rate_ris: f64,
    pub r2_ris: f64,
}

/// Log-log fit along BS counts at `n_ris`, log-linear fit along RIS counts at `n_bs`.
pub fn fit_js_orders(surface: &ScalingSurface, n_bs: usize, n_ris: usize) -> Result<JsOrders> {
    if surface.bs_values.len() < 3 || surface.ris_values.len() < 3 {
        return Err(Error::invalid("mismatch fits need at least three values per axis"));
    }
    let (i0, j0) = surface.position(n_bs, n_ris)?;
    let ln_xi = |i: usize, j: usize| -> Result<f64> {
        let xi = surface.cell(i, j).mean.xi;
        if xi > 0.0 {
            Ok(xi.ln())
        } else {
            Err(Error::invalid("mismatch fit needs positive divergence"))
        }
    };
    let xb: Vec<f64> = surface.bs_values.iter().map(|&n| (n as f64).ln()).collect();
    let yb: Vec<f64> = (0..surface.bs_values.len())
        .map(|i| ln_xi(i, j0))
        .collect::<Result<_>>()?;
    let xr: Vec<f64> = surface.ris_values.iter().map(|&n| n as f64).collect();
    let yr: Vec<f64> = (0..surface.ris_values.len())
        .map(|j| ln_xi(i0, j))
        .collect::<Result<_>>()?;
    let bs = fit_line(&xb, &yb)?;
    let ris = fit_line(&xr, &yr)?;
    Ok(JsOrders {
        p_bs: -bs.slope,
        r2_bs: bs.r2,
        rate_ris: -ris.slope,
        r2_ris: ris.r2,
    })
}

/// IREE partial derivatives in `(n_bs, n_ris)` at one surface cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCell {
    pub n_bs: usize,
    pub n_ris: usize,
    pub d_iree_d_nbs: f64,
    pub d_iree_d_nris: f64,
}

fn divided(values: &[f64], axis: &[usize], k: usize) -> f64 {
    let last = axis.len() - 1;
    let (lo, hi) = match k {
        0 => (0, 1),
        k if k == last => (last - 1, last),
        k => (k - 1, k + 1),
    };
    (values[hi] - values[lo]) / (axis[hi] as f64 - axis[lo] as f64)
}

/// Divided differences of mean IREE: central inside, one-sided on the border.
pub fn iree_gradient_map(surface: &ScalingSurface) -> Result<Vec<GradientCell>> {
    let (nb, nr) = (surface.bs_values.len(), surface.ris_values.len());
    if nb < 2 || nr < 2 {
        return Err(Error::invalid("gradient map needs at least a 2x2 surface"));
    }
    let mut out = Vec::with_capacity(nb * nr);
    for i in 0..nb {
        let row: Vec<f64> = (0..nr).map(|j| surface.cell(i, j).mean.iree).collect();
        for j in 0..nr {
            let col: Vec<f64> = (0..nb).map(|a| surface.cell(a, j).mean.iree).collect();
            out.push(GradientCell {
                n_bs: surface.bs_values[i],
                n_ris: surface.ris_values[j],
                d_iree_d_nbs: divided(&col, &surface.bs_values, i),
                d_iree_d_nris: divided(&row, &surface.ris_values, j),
            });
        }
    }
    Ok(out)
}

/// Constants the order-wise model needs from a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawInputs {
    pub n_t_bs: usize,
    pub n_t_ris: usize,
    pub p_max: f64,
    pub b_max: f64,
    pub p_circuit_bs: f64,
    pub p_circuit_ris: f64,
    pub beta: f64,
    pub noise_psd: f64,
}

impl LawInputs {
    pub fn from_scenario(s: &Scenario) -> Self {
        LawInputs {
            n_t_bs: s.n_t_bs,
            n_t_ris: s.n_t_ris,
            p_max: s.power.p_max,
            b_max: s.power.b_max,
            p_circuit_bs: s.power.p_circuit_bs,
            p_circuit_ris: s.power.p_circuit_ris,
            beta: s.propagation.beta,
            noise_psd: s.propagation.noise_psd,
        }
    }
}

/// Peak spectral efficiency with every link at zero distance, where the
/// regularized path-loss amplitude equals `beta`.
pub fn s_max(inputs: &LawInputs, n_ris: usize) -> f64 {
    let b = inputs.beta;
    let amp = 1.0 / b + (n_ris * inputs.n_t_ris) as f64 / (b * b);
    let snr = inputs.n_t_bs as f64 * amp * amp * inputs.p_max / (inputs.noise_psd * inputs.b_max);
    snr.ln_1p() / std::f64::consts::LN_2
}

/// Normalization error between peak network capacity and peak traffic.
pub fn delta_err(b_max: f64, s_max: f64, d_tot: f64, d_lmax: f64, c_tot: f64) -> f64 {
    b_max * s_max * d_tot / (d_lmax * c_tot)
}

/// Per-cell normalization constants and the empirical fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingLaw {
    pub inputs: LawInputs,
    /// `[cell]`, same order as the surface.
    pub s_max: Vec<f64>,
    pub d_lmax: Vec<f64>,
    pub delta_err: Vec<f64>,
    pub capacity: Option<LineFit>,
    pub js: Option<JsOrders>,
}

impl ScalingLaw {
    pub fn delta_violations(&self) -> usize {
        self.delta_err.iter().filter(|d| !(**d >= 1.0)).count()
    }
}

fn mean_d_lmax(cell: &SweepCell) -> Option<f64> {
    if cell.runs.is_empty() {
        None
    } else {
        Some(cell.runs.iter().map(|r| r.d_lmax).sum::<f64>() / cell.runs.len() as f64)
    }
}

/// Normalization constants of every cell plus the capacity and mismatch fits
/// at the reference counts (fits that are not possible are left empty).
pub fn fit_scaling_law(
    surface: &ScalingSurface,
    inputs: LawInputs,
    d_lmax_fallback: f64,
    n_bs_ref: usize,
    n_ris_ref: usize,
) -> ScalingLaw {
    let mut s = Vec::with_capacity(surface.cells.len());
    let mut d = Vec::with_capacity(surface.cells.len());
    let mut delta = Vec::with_capacity(surface.cells.len());
    for cell in &surface.cells {
        let sm = s_max(&inputs, cell.n_ris);
        let dl = mean_d_lmax(cell).unwrap_or(d_lmax_fallback);
        s.push(sm);
        d.push(dl);
        delta.push(delta_err(inputs.b_max, sm, cell.mean.d_tot, dl, cell.mean.c_tot));
    }
    ScalingLaw {
        inputs,
        s_max: s,
        d_lmax: d,
        delta_err: delta,
        capacity: fit_capacity_law(surface, n_ris_ref).ok(),
        js: fit_js_orders(surface, n_bs_ref, n_ris_ref).ok(),
    }
}

/// Model prediction for every cell and the fitted constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub predicted_iree: Vec<f64>,
    /// `(predicted - measured) / measured` per cell.
    pub deviation: Vec<f64>,
    pub scale: f64,
    pub power_exponent: f64,
    pub mismatch_weight: f64,
    pub capacity_intercept: f64,
    pub capacity_slope: f64,
    pub rank_correlation: f64,
}

fn ris_factor(n_ris: usize) -> f64 {
    if n_ris <= 1 {
        1.0
    } else {
        1.0 - (n_ris as f64).powi(-2)
    }
}

/// Order-wise IREE model with fitted constants:
/// `K min(a + b log2(N_BS f(N_R)), D) (1 - k z) / (N_BS^e (P_max + P^c) + N_R P^r)`
/// with `z = 1 / (sqrt(N_BS) delta^(N_R + 1))` and `f(N_R) = 1 - N_R^-2`.
/// `k` and `a, b` are least squares fits, `e` a grid search over `[0.5, 1]`, `K` closed form.
pub fn theory_overlay(surface: &ScalingSurface, law: &ScalingLaw) -> Result<Overlay> {
    let cells = &surface.cells;
    if cells.len() < 2 || law.delta_err.len() != cells.len() {
        return Err(Error::invalid("overlay needs a fitted law over at least two cells"));
    }
    let inp = &law.inputs;
    let z: Vec<f64> = cells
        .iter()
        .zip(&law.delta_err)
        .map(|(c, d)| 1.0 / ((c.n_bs as f64).sqrt() * d.powi(c.n_ris as i32 + 1)))
        .collect();
    let szz: f64 = z.iter().map(|v| v * v).sum();
    let k = if szz > 0.0 {
        cells.iter().zip(&z).map(|(c, v)| c.mean.xi * v).sum::<f64>() / szz
    } else {
        0.0
    };
    let x: Vec<f64> = cells
        .iter()
        .map(|c| (c.n_bs as f64 * ris_factor(c.n_ris)).log2())
        .collect();
    let y: Vec<f64> = cells.iter().map(|c| c.mean.c_tot).collect();
    let cap = fit_line(&x, &y).unwrap_or(LineFit {
        intercept: y.iter().sum::<f64>() / y.len() as f64,
        slope: 0.0,
        r2: 0.0,
    });
    let measured: Vec<f64> = cells.iter().map(|c| c.mean.iree).collect();
    let shape = |e: f64| -> Vec<f64> {
        cells
            .iter()
            .zip(&z)
            .zip(&x)
            .map(|((c, zv), xv)| {
                let capacity = (cap.intercept + cap.slope * xv).min(c.mean.d_tot).max(0.0);
                let power =
                    (c.n_bs as f64).powf(e) * (inp.p_max + inp.p_circuit_bs) + c.n_ris as f64 * inp.p_circuit_ris;
                capacity * (1.0 - k * zv) / power
            })
            .collect()
    };
    let mut best: Option<(f64, f64, f64)> = None;
    for step in 0..=50 {
        let e = 0.5 + 0.01 * step as f64;
        let g = shape(e);
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if !(gg > 0.0) {
            continue;
        }
        let scale = g.iter().zip(&measured).map(|(a, b)| a * b).sum::<f64>() / gg;
        let sse: f64 = g.iter().zip(&measured).map(|(a, b)| (scale * a - b).powi(2)).sum();
        if best.is_none_or(|(s, _, _)| sse < s) {
            best = Some((sse, e, scale));
        }
    }
    let (_, e, scale) = best.ok_or_else(|| Error::invalid("model shape vanishes on every cell"))?;
    let predicted: Vec<f64> = shape(e).iter().map(|v| scale * v).collect();
    let deviation = predicted
        .iter()
        .zip(&measured)
        .map(|(p, m)| if *m != 0.0 { (p - m) / m } else { f64::NAN })
        .collect();
    Ok(Overlay {
        rank_correlation: spearman(&predicted, &measured),
        predicted_iree: predicted,
        deviation,
        scale,
        power_exponent: e,
        mismatch_weight: k,
        capacity_intercept: cap.intercept,
        capacity_slope: cap.slope,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with averaged ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va > 0.0 && vb > 0.0 {
        cov / (va * vb).sqrt()
    } else {
        0.0
    }
}

/// Mean relative mismatch reduction per added element along each axis,
/// over steps that start in a cell whose capacity exceeds its traffic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSplit {
    pub per_ris: f64,
    pub per_bs: f64,
    pub ris_steps: usize,
    pub bs_steps: usize,
}

pub fn over_capacity_reductions(surface: &ScalingSurface) -> RegimeSplit {
    let rel = |a: &Metrics, b: &Metrics, dn: f64| (a.xi - b.xi) / a.xi / dn;
    let over = |m: &Metrics| m.c_tot > m.d_tot && m.xi > 0.0;
    let (nb, nr) = (surface.bs_values.len(), surface.ris_values.len());
    let (mut ris, mut bs) = (Vec::new(), Vec::new());
    for i in 0..nb {
        for j in 0..nr {
            let here = &surface.cell(i, j).mean;
            if !over(here) {
                continue;
            }
            if j + 1 < nr {
                let dn = (surface.ris_values[j + 1] - surface.ris_values[j]) as f64;
                ris.push(rel(here, &surface.cell(i, j + 1).mean, dn));
            }
            if i + 1 < nb {
                let dn = (surface.bs_values[i + 1] - surface.bs_values[i]) as f64;
                bs.push(rel(here, &surface.cell(i + 1, j).mean, dn));
            }
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    RegimeSplit {
        per_ris: mean(&ris),
        per_bs: mean(&bs),
        ris_steps: ris.len(),
        bs_steps: bs.len(),
    }
}
