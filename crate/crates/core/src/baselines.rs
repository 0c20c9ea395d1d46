//! Clustering placement, zero-forcing beams and RIS phase alignment, plus the
//! four baseline deployment variants built from them.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::propagation::{
    hybrid_channel, link_sine, steering_from_sine, BsConfig, Deployment, PropagationParams, RisConfig,
};
use crate::solver::{evaluate_metrics, optimize_from, Scenario, Schedule, SolveTrace, SolverConfig};
use crate::traffic::{AreaGrid, TrafficField};

const KMEANS_RESTARTS: usize = 8;
const LLOYD_MAX_ITERS: usize = 100;
const BS_STREAM: u64 = 0x6273;
const RIS_STREAM: u64 = 0x726973;

/// Traffic-weighted within-cluster sum of squared distances.
pub fn kmeans_sse(points: &[Point], weights: &[f64], centers: &[Point]) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| w * nearest(*p, centers).1)
        .sum()
}

/// Index of and squared distance to the closest center.
fn nearest(p: Point, centers: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = (p.x - c.x).powi(2) + (p.y - c.y).powi(2);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Weighted Lloyd iterations from `centers`; returns the objective after every update.
pub fn lloyd(points: &[Point], weights: &[f64], centers: &mut [Point], max_iters: usize) -> Vec<f64> {
    let k = centers.len();
    let mut history = vec![kmeans_sse(points, weights, centers)];
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(*p, centers).0).collect();
    for _ in 0..max_iters {
        let mut sx = vec![0.0; k];
        let mut sy = vec![0.0; k];
        let mut sw = vec![0.0; k];
        for ((p, w), &a) in points.iter().zip(weights).zip(&assign) {
            sx[a] += w * p.x;
            sy[a] += w * p.y;
            sw[a] += w;
        }
        for c in 0..k {
            if sw[c] > 0.0 {
                centers[c] = Point::new(sx[c] / sw[c], sy[c] / sw[c]);
            }
        }
        history.push(kmeans_sse(points, weights, centers));
        let next: Vec<usize> = points.iter().map(|p| nearest(*p, centers).0).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    history
}

/// Weighted k-means++ seeding.
fn seed_centers(points: &[Point], weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut centers = Vec::with_capacity(k);
    let first = WeightedIndex::new(weights).expect("positive total weight");
    centers.push(points[first.sample(rng)]);
    while centers.len() < k {
        let scores: Vec<f64> = points
            .iter()
            .zip(weights)
            .map(|(p, w)| w * nearest(*p, &centers).1)
            .collect();
        let idx = match WeightedIndex::new(&scores) {
            Ok(dist) => dist.sample(rng),
            // Every weighted point already hosts a center: take any free point.
            Err(_) => points.iter().position(|p| !centers.contains(p)).unwrap_or(0),
        };
        centers.push(points[idx]);
    }
    centers
}

fn kmeans_with_stream(traffic: &TrafficField, grid: &AreaGrid, n: usize, seed: u64, stream: u64) -> Result<Vec<Point>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if n > grid.len() {
        return Err(Error::invalid(format!("{n} clusters exceed {} cells", grid.len())));
    }
    if traffic.len() != grid.len() {
        return Err(Error::invalid("traffic field does not match the grid"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let points = grid.centers();
    let weights = traffic.values();
    let mut best: Option<(f64, Vec<Point>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let mut centers = seed_centers(points, weights, n, &mut rng);
        let sse = *lloyd(points, weights, &mut centers, LLOYD_MAX_ITERS).last().unwrap();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, centers));
        }
    }
    Ok(best.unwrap().1)
}

/// Traffic-weighted k-means placement of `n` elements.
pub fn kmeans_place(traffic: &TrafficField, grid: &AreaGrid, n: usize, seed: u64) -> Result<Vec<Point>> {
    kmeans_with_stream(traffic, grid, n, seed, BS_STREAM)
}

/// Zero-forcing beams toward the given target channels, one beam per target,
/// scaled to a total power of `p_max`. Falls back to matched filtering when the
/// targets are linearly dependent.
pub fn zero_forcing(channels: &[Vec<Complex64>], p_max: f64) -> Vec<Vec<Complex64>> {
    let k = channels.len();
    if k == 0 {
        return Vec::new();
    }
    let nt = channels[0].len();
    let h = DMatrix::from_fn(k, nt, |i, j| channels[i][j]);
    let svd = h.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > smax * 1e-10).count();
    let mut beams: Vec<Vec<Complex64>> = if smax > 0.0 && rank == k {
        // With plain-transpose channels, H W = I needs W = H^+ (nt x k).
        let pinv = svd.pseudo_inverse(smax * 1e-12).expect("svd with vectors");
        (0..k).map(|i| (0..nt).map(|j| pinv[(j, i)]).collect()).collect()
    } else {
        log::warn!("zero-forcing targets are rank deficient ({rank} < {k}); using matched filters");
        channels
            .iter()
            .map(|c| {
                let norm = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                if norm > 0.0 {
                    c.iter().map(|v| v.conj() / norm).collect()
                } else {
                    vec![Complex64::new(0.0, 0.0); nt]
                }
            })
            .collect()
    };
    let total: f64 = beams.iter().flatten().map(|w| w.norm_sqr()).sum();
    if total > 0.0 {
        let s = (p_max / total).sqrt();
        beams.iter_mut().flatten().for_each(|w| *w *= s);
    }
    beams
}

/// Matched-filter beams toward each target channel with equal power split.
pub fn matched_filter(channels: &[Vec<Complex64>], p_max: f64) -> Vec<Vec<Complex64>> {
    let k = channels.len().max(1) as f64;
    channels
        .iter()
        .map(|c| {
            let norm = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                let s = (p_max / k).sqrt() / norm;
                c.iter().map(|v| v.conj() * s).collect()
            } else {
                vec![Complex64::new(0.0, 0.0); c.len()]
            }
        })
        .collect()
}

/// Sets every RIS phase so its reflected path toward `target` adds in phase with the
/// direct path of the RIS's nearest BS, at that BS's reference antenna.
pub fn phase_align(dep: &Deployment, target: Point, params: &PropagationParams) -> Deployment {
    let mut out = dep.clone();
    if dep.bs.is_empty() {
        return out;
    }
    let k = params.phase_per_element();
    for ris in out.ris.iter_mut() {
        let bs = dep
            .bs
            .iter()
            .map(|b| b.location)
            .min_by(|a, b| a.distance(ris.location).total_cmp(&b.distance(ris.location)))
            .expect("at least one BS");
        let nr = ris.phases.len();
        let toward_bs = steering_from_sine(link_sine(ris.location, bs), nr, k);
        let toward_user = steering_from_sine(link_sine(ris.location, target), nr, k);
        for ((phi, b), c) in ris.phases.iter_mut().zip(toward_bs).zip(toward_user) {
            *phi = (-(b * c).arg()).rem_euclid(TAU);
        }
    }
    out
}

/// Cells of each BS's cluster (nearest BS), highest traffic first.
fn cluster_targets(scenario: &Scenario, sites: &[Point], per_bs: usize) -> Vec<Vec<usize>> {
    let centers = scenario.grid.centers();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); sites.len()];
    for (q, p) in centers.iter().enumerate() {
        members[nearest(*p, sites).0].push(q);
    }
    let d = scenario.traffic.values();
    members
        .into_iter()
        .enumerate()
        .map(|(n, mut cells)| {
            if cells.is_empty() {
                // An empty cluster aims at the cells closest to its BS.
                cells = (0..centers.len()).collect();
                cells.sort_by(|a, b| {
                    centers[*a]
                        .distance(sites[n])
                        .total_cmp(&centers[*b].distance(sites[n]))
                });
            } else {
                cells.sort_by(|a, b| d[*b].total_cmp(&d[*a]).then(a.cmp(b)));
            }
            cells.truncate(per_bs);
            cells
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BeamRule {
    ZeroForcing,
    MatchedFilter,
}

/// Clustered placement, equal bandwidth, aligned phases and per-cluster beams.
fn clustered_deployment(scenario: &Scenario, n_ris: usize, rule: BeamRule) -> Result<Deployment> {
    scenario.validate()?;
    let sites = kmeans_place(&scenario.traffic, &scenario.grid, scenario.n_bs, scenario.seed)?;
    let ris_sites = kmeans_with_stream(&scenario.traffic, &scenario.grid, n_ris, scenario.seed, RIS_STREAM)?;
    let nt = scenario.n_t_bs;
    let zero = vec![vec![Complex64::new(0.0, 0.0); nt]; nt];
    let mut dep = Deployment {
        bs: sites
            .iter()
            .map(|&location| BsConfig {
                location,
                beams: zero.clone(),
                bandwidth: scenario.power.b_max / scenario.n_bs as f64,
            })
            .collect(),
        ris: ris_sites
            .into_iter()
            .map(|location| RisConfig {
                location,
                phases: vec![0.0; scenario.n_t_ris],
            })
            .collect(),
    };
    let peak = scenario.grid.centers()[scenario.traffic.peak_cell()];
    dep = phase_align(&dep, peak, &scenario.propagation);

    let targets = cluster_targets(scenario, &sites, nt);
    let centers = scenario.grid.centers();
    // Channel vectors depend only on geometry and phases, not on the beams.
    let channels: Vec<Vec<Vec<Vec<Complex64>>>> = targets
        .iter()
        .map(|cells| {
            cells
                .iter()
                .map(|&q| hybrid_channel(centers[q], &dep, &scenario.propagation, scenario.seed))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    for (n, bs) in dep.bs.iter_mut().enumerate() {
        let hs: Vec<Vec<Complex64>> = channels[n].iter().map(|h| h[n].clone()).collect();
        let beams = match rule {
            BeamRule::ZeroForcing => zero_forcing(&hs, scenario.power.p_max),
            BeamRule::MatchedFilter => matched_filter(&hs, scenario.power.p_max),
        };
        for (slot, w) in bs.beams.iter_mut().zip(beams) {
            *slot = w;
        }
    }
    Ok(dep)
}

/// Starting point of the optimizer: clustered sites, equal bandwidth, matched-filter
/// beams toward each cluster's busiest cells and phases aligned to the traffic peak.
pub fn warm_start(scenario: &Scenario) -> Result<Deployment> {
    clustered_deployment(scenario, scenario.n_ris, BeamRule::MatchedFilter)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineVariant {
    BsOnlyUnopt,
    BsRisUnopt,
    RisOptOnly,
    BothOpt,
}

impl BaselineVariant {
    pub const ALL: [BaselineVariant; 4] = [
        BaselineVariant::BsOnlyUnopt,
        BaselineVariant::BsRisUnopt,
        BaselineVariant::RisOptOnly,
        BaselineVariant::BothOpt,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            BaselineVariant::BsOnlyUnopt => "BS_ONLY_UNOPT",
            BaselineVariant::BsRisUnopt => "BS_RIS_UNOPT",
            BaselineVariant::RisOptOnly => "RIS_OPT_ONLY",
            BaselineVariant::BothOpt => "BOTH_OPT",
        }
    }
}

/// Clustered zero-forcing deployment, with or without the scenario's RISs.
pub fn baseline_deployment(scenario: &Scenario, with_ris: bool) -> Result<Deployment> {
    let n_ris = if with_ris { scenario.n_ris } else { 0 };
    clustered_deployment(scenario, n_ris, BeamRule::ZeroForcing)
}

pub fn baseline_solve(scenario: &Scenario, variant: BaselineVariant, config: &SolverConfig) -> Result<SolveTrace> {
    let fixed = |dep: Deployment| -> Result<SolveTrace> {
        Ok(SolveTrace {
            records: Vec::new(),
            metrics: evaluate_metrics(scenario, &dep)?,
            deployment: dep,
            converged: true,
        })
    };
    match variant {
        BaselineVariant::BsOnlyUnopt => fixed(baseline_deployment(scenario, false)?),
        BaselineVariant::BsRisUnopt => fixed(baseline_deployment(scenario, true)?),
        BaselineVariant::RisOptOnly => optimize_from(
            scenario,
            config,
            baseline_deployment(scenario, true)?,
            Schedule::RisOnly,
        ),
        BaselineVariant::BothOpt => optimize_from(
            scenario,
            config,
            baseline_deployment(scenario, true)?,
            Schedule::Alternating,
        ),
    }
}
