//! Flattening of deployment parameter blocks into real vectors.
//!
//! BS block: all BS `x, y` (km), then every beam entry as `re, im`, then one
//! bandwidth logit per BS. RIS block: all RIS `x, y` (km), then every phase.
//! The joint block is the BS block followed by the RIS block.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::propagation::Deployment;

const KM: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockId {
    Bs,
    Ris,
    Joint,
}

impl BlockId {
    pub fn has_bs(self) -> bool {
        matches!(self, BlockId::Bs | BlockId::Joint)
    }

    pub fn has_ris(self) -> bool {
        matches!(self, BlockId::Ris | BlockId::Joint)
    }
}

/// Feasible set enforced when unpacking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub extent_m: f64,
    pub p_max: f64,
    pub b_max: f64,
}

/// Offsets of each parameter group inside a packed vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_bs: usize,
    pub n_ris: usize,
    pub n_antennas: usize,
    pub n_elements: usize,
    pub bs_loc: usize,
    pub beams: usize,
    pub logits: usize,
    pub ris_loc: usize,
    pub phases: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(dep: &Deployment, block: BlockId) -> Self {
        let n_bs = dep.bs.len();
        let n_ris = dep.ris.len();
        let nt = dep.n_antennas();
        let nr = dep.n_elements();
        let mut len = 0;
        let (bs_loc, beams, logits) = if block.has_bs() {
            let a = len;
            let b = a + 2 * n_bs;
            let c = b + 2 * n_bs * nt * nt;
            len = c + n_bs;
            (a, b, c)
        } else {
            (0, 0, 0)
        };
        let (ris_loc, phases) = if block.has_ris() {
            let a = len;
            let b = a + 2 * n_ris;
            len = b + n_ris * nr;
            (a, b)
        } else {
            (0, 0)
        };
        Layout {
            n_bs,
            n_ris,
            n_antennas: nt,
            n_elements: nr,
            bs_loc,
            beams,
            logits,
            ris_loc,
            phases,
            len,
        }
    }

    /// Offset of the real part of entry `k` of beam `i` of BS `n`.
    pub fn beam_index(&self, n: usize, i: usize, k: usize) -> usize {
        self.beams + 2 * ((n * self.n_antennas + i) * self.n_antennas + k)
    }
}

pub fn pack(dep: &Deployment, block: BlockId) -> Vec<f64> {
    let layout = Layout::new(dep, block);
    let mut out = Vec::with_capacity(layout.len);
    if block.has_bs() {
        for b in &dep.bs {
            out.extend([b.location.x / KM, b.location.y / KM]);
        }
        for w in dep.bs.iter().flat_map(|b| b.beams.iter().flatten()) {
            out.extend([w.re, w.im]);
        }
        let total: f64 = dep.bs.iter().map(|b| b.bandwidth).sum();
        for b in &dep.bs {
            out.push((b.bandwidth.max(f64::MIN_POSITIVE) / total.max(f64::MIN_POSITIVE)).ln());
        }
    }
    if block.has_ris() {
        for r in &dep.ris {
            out.extend([r.location.x / KM, r.location.y / KM]);
        }
        for r in &dep.ris {
            out.extend(&r.phases);
        }
    }
    debug_assert_eq!(out.len(), layout.len);
    out
}

/// Writes a packed block into a copy of `template`, projecting onto the feasible set.
pub fn unpack(x: &[f64], block: BlockId, template: &Deployment, bounds: &Bounds) -> Result<Deployment> {
    let layout = Layout::new(template, block);
    if x.len() != layout.len {
        return Err(Error::invalid(format!(
            "packed vector has length {}, layout needs {}",
            x.len(),
            layout.len
        )));
    }
    let mut dep = template.clone();
    let clamp = |v: f64| (v * KM).clamp(0.0, bounds.extent_m);
    if block.has_bs() {
        for (n, b) in dep.bs.iter_mut().enumerate() {
            b.location = Point::new(clamp(x[layout.bs_loc + 2 * n]), clamp(x[layout.bs_loc + 2 * n + 1]));
            for (i, w) in b.beams.iter_mut().enumerate() {
                for (k, e) in w.iter_mut().enumerate() {
                    let j = layout.beam_index(n, i, k);
                    *e = Complex64::new(x[j], x[j + 1]);
                }
            }
            project_power(&mut b.beams, bounds.p_max);
        }
        let logits = &x[layout.logits..layout.logits + layout.n_bs];
        for (b, share) in dep.bs.iter_mut().zip(softmax(logits)) {
            b.bandwidth = bounds.b_max * share;
        }
    }
    if block.has_ris() {
        for (m, r) in dep.ris.iter_mut().enumerate() {
            r.location = Point::new(clamp(x[layout.ris_loc + 2 * m]), clamp(x[layout.ris_loc + 2 * m + 1]));
            let off = layout.phases + m * layout.n_elements;
            for (j, phi) in r.phases.iter_mut().enumerate() {
                *phi = x[off + j].rem_euclid(TAU);
            }
        }
    }
    Ok(dep)
}

/// Scales a beam set down onto the power ball of radius `p_max`.
pub fn project_power(beams: &mut [Vec<Complex64>], p_max: f64) {
    let p: f64 = beams.iter().flatten().map(|w| w.norm_sqr()).sum();
    if p > p_max {
        let s = (p_max / p).sqrt();
        beams.iter_mut().flatten().for_each(|w| *w *= s);
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::{BsConfig, RisConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bounds() -> Bounds {
        Bounds {
            extent_m: 5000.0,
            p_max: 60.0,
            b_max: 6e9,
        }
    }

    fn sample(n_bs: usize, nt: usize, n_ris: usize, nr: usize) -> Deployment {
        Deployment {
            bs: (0..n_bs)
                .map(|n| BsConfig {
                    location: Point::new(100.0 + 37.0 * n as f64, 2500.0 - 11.0 * n as f64),
                    beams: (0..nt)
                        .map(|i| {
                            (0..nt)
                                .map(|k| Complex64::new(0.1 * (i + k) as f64, -0.2 * k as f64))
                                .collect()
                        })
                        .collect(),
                    bandwidth: 6e9 / n_bs as f64,
                })
                .collect(),
            ris: (0..n_ris)
                .map(|m| RisConfig {
                    location: Point::new(1000.0 + m as f64, 3000.0),
                    phases: (0..nr).map(|j| 0.5 * j as f64).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn layout_lengths() {
        assert_eq!(pack(&sample(1, 2, 0, 0), BlockId::Bs).len(), 11);
        assert_eq!(pack(&sample(1, 2, 1, 9), BlockId::Ris).len(), 11);
        assert_eq!(pack(&sample(2, 2, 1, 9), BlockId::Joint).len(), 2 * 11 + 11);
    }

    #[test]
    fn round_trip() {
        let d = sample(3, 4, 2, 9);
        for block in [BlockId::Bs, BlockId::Ris, BlockId::Joint] {
            let x = pack(&d, block);
            let back = unpack(&x, block, &d, &bounds()).unwrap();
            let y = pack(&back, block);
            for (a, b) in x.iter().zip(&y) {
                assert_relative_eq!(*a, *b, max_relative = 1e-12, epsilon = 1e-12);
            }
            for (a, b) in d.bs.iter().zip(&back.bs) {
                assert_relative_eq!(a.location.x, b.location.x, max_relative = 1e-14);
                assert_relative_eq!(a.bandwidth, b.bandwidth, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn untouched_block_is_bit_identical() {
        let d = sample(2, 3, 2, 5);
        let mut x = pack(&d, BlockId::Ris);
        x.iter_mut().for_each(|v| *v += 0.3);
        let out = unpack(&x, BlockId::Ris, &d, &bounds()).unwrap();
        assert_eq!(out.bs, d.bs);
        let mut x = pack(&d, BlockId::Bs);
        x.iter_mut().for_each(|v| *v *= 0.7);
        let out = unpack(&x, BlockId::Bs, &d, &bounds()).unwrap();
        assert_eq!(out.ris, d.ris);
    }

    #[test]
    fn equal_logits_split_bandwidth_evenly() {
        let d = sample(4, 1, 0, 0);
        let mut x = pack(&d, BlockId::Bs);
        let l = Layout::new(&d, BlockId::Bs);
        x[l.logits..].iter_mut().for_each(|v| *v = 0.7);
        let out = unpack(&x, BlockId::Bs, &d, &bounds()).unwrap();
        for b in &out.bs {
            assert_relative_eq!(b.bandwidth, 1.5e9, max_relative = 1e-14);
        }
    }

    #[test]
    fn overpowered_beams_are_projected() {
        let mut d = sample(1, 2, 0, 0);
        let p = d.bs[0].beam_power();
        let s = (2.0 * 60.0 / p).sqrt();
        d.bs[0].beams.iter_mut().flatten().for_each(|w| *w *= s);
        let out = unpack(&pack(&d, BlockId::Bs), BlockId::Bs, &d, &bounds()).unwrap();
        assert_relative_eq!(out.bs[0].beam_power(), 60.0, max_relative = 1e-12);
    }

    #[test]
    fn wrong_length_rejected() {
        let d = sample(1, 2, 0, 0);
        assert!(unpack(&[0.0; 3], BlockId::Bs, &d, &bounds()).is_err());
    }

    proptest! {
        #[test]
        fn unpack_is_always_feasible(vals in prop::collection::vec(-50.0f64..50.0, 2 * 11 + 2 * 2 + 2 * 3)) {
            let d = sample(2, 2, 2, 3);
            let out = unpack(&vals, BlockId::Joint, &d, &bounds()).unwrap();
            let total: f64 = out.bs.iter().map(|b| b.bandwidth).sum();
            prop_assert!(total <= 6e9 * (1.0 + 1e-12));
            for b in &out.bs {
                prop_assert!(b.bandwidth >= 0.0);
                prop_assert!(b.beam_power() <= 60.0 * (1.0 + 1e-12));
                prop_assert!((0.0..=5000.0).contains(&b.location.x));
            }
            for r in &out.ris {
                prop_assert!(r.phases.iter().all(|p| (0.0..TAU).contains(p)));
                prop_assert!((0.0..=5000.0).contains(&r.location.y));
            }
        }
    }
}
