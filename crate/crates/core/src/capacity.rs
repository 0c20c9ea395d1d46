//! Received SNR, capacity fields and the power consumption model.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Point;
use crate::network::{ChannelContext, ChannelState, ShadowTable};
use crate::propagation::{hybrid_channel, Deployment, PropagationParams};
use crate::traffic::AreaGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    /// Reciprocal power-amplifier efficiency.
    pub lambda_amp: f64,
    pub p_circuit_bs: f64,
    pub p_circuit_ris: f64,
    /// Per-BS transmit power cap, W.
    pub p_max: f64,
    /// Total bandwidth shared by all BSs, Hz.
    pub b_max: f64,
}

impl PowerModel {
    pub fn reference() -> Self {
        PowerModel {
            lambda_amp: 1.0 / 0.38,
            p_circuit_bs: 100.0,
            p_circuit_ris: 3.0,
            p_max: 60.0,
            b_max: 6e9,
        }
    }
}

/// Which capacity expression to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapacityKind {
    /// Shannon capacity with each BS's own bandwidth in the SNR.
    Total,
    /// Lower bound with the total bandwidth in every SNR denominator.
    LowerBound,
}

/// Received SNR over all beams of one BS; `None` when the BS has no bandwidth.
pub fn received_snr(
    h: &[Complex64],
    beams: &[Vec<Complex64>],
    bandwidth: f64,
    params: &PropagationParams,
) -> Option<f64> {
    if bandwidth <= 0.0 {
        return None;
    }
    Some(beam_signal(h, beams) / (params.noise_psd * bandwidth))
}

fn beam_signal(h: &[Complex64], beams: &[Vec<Complex64>]) -> f64 {
    beams
        .iter()
        .map(|w| h.iter().zip(w).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr())
        .sum()
}

/// Capacity contribution of one BS given its summed signal power.
#[inline]
pub(crate) fn bs_capacity(
    signal: f64,
    bandwidth: f64,
    kind: CapacityKind,
    params: &PropagationParams,
    power: &PowerModel,
) -> f64 {
    if bandwidth <= 0.0 {
        return 0.0;
    }
    let noise_band = match kind {
        CapacityKind::Total => bandwidth,
        CapacityKind::LowerBound => power.b_max,
    };
    bandwidth * (signal / (params.noise_psd * noise_band)).ln_1p() / std::f64::consts::LN_2
}

fn point_capacity(
    user: Point,
    deployment: &Deployment,
    params: &PropagationParams,
    power: &PowerModel,
    seed: u64,
    kind: CapacityKind,
) -> Result<f64> {
    let h = hybrid_channel(user, deployment, params, seed)?;
    Ok(deployment
        .bs
        .iter()
        .zip(&h)
        .map(|(bs, hn)| bs_capacity(beam_signal(hn, &bs.beams), bs.bandwidth, kind, params, power))
        .sum())
}

/// Shannon capacity at a location, bit/s.
pub fn capacity_at(
    user: Point,
    deployment: &Deployment,
    params: &PropagationParams,
    power: &PowerModel,
    seed: u64,
) -> Result<f64> {
    point_capacity(user, deployment, params, power, seed, CapacityKind::Total)
}

/// Capacity lower bound at a location, bit/s.
pub fn capacity_lower_bound_at(
    user: Point,
    deployment: &Deployment,
    params: &PropagationParams,
    power: &PowerModel,
    seed: u64,
) -> Result<f64> {
    point_capacity(user, deployment, params, power, seed, CapacityKind::LowerBound)
}

pub fn bs_power(beams: &[Vec<Complex64>], power: &PowerModel) -> f64 {
    let tx: f64 = beams.iter().flatten().map(|w| w.norm_sqr()).sum();
    power.lambda_amp * tx + power.p_circuit_bs
}

pub fn total_power(deployment: &Deployment, power: &PowerModel) -> f64 {
    let tx: f64 = deployment
        .bs
        .iter()
        .flat_map(|b| b.beams.iter().flatten())
        .map(|w| w.norm_sqr())
        .sum();
    power.lambda_amp * tx
        + deployment.ris.len() as f64 * power.p_circuit_ris
        + deployment.bs.len() as f64 * power.p_circuit_bs
}

/// Per-cell capacity in bit/s.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityField {
    values: Vec<f64>,
    c_tot: f64,
}

impl CapacityField {
    pub fn from_values(values: Vec<f64>) -> Self {
        let c_tot = values.iter().sum();
        CapacityField { values, c_tot }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn c_tot(&self) -> f64 {
        self.c_tot
    }
}

/// Per-cell capacities from a prebuilt channel state.
pub(crate) fn cell_capacities(
    state: &ChannelState,
    deployment: &Deployment,
    kind: CapacityKind,
    params: &PropagationParams,
    power: &PowerModel,
) -> Vec<f64> {
    let mut c = vec![0.0; state.n_users()];
    for (n, bs) in deployment.bs.iter().enumerate() {
        for (cq, s) in c.iter_mut().zip(state.signal(n)) {
            *cq += bs_capacity(*s, bs.bandwidth, kind, params, power);
        }
    }
    c
}

/// Capacity at every grid center.
pub fn capacity_field(
    deployment: &Deployment,
    grid: &AreaGrid,
    params: &PropagationParams,
    power: &PowerModel,
    seed: u64,
    kind: CapacityKind,
) -> Result<CapacityField> {
    deployment.validate()?;
    let shadows = ShadowTable::new(grid.centers(), deployment.bs.len(), deployment.ris.len(), params, seed);
    let ctx = ChannelContext {
        users: grid.centers(),
        params,
        shadows: &shadows,
    };
    let state = ChannelState::build(&ctx, deployment)?;
    Ok(CapacityField::from_values(cell_capacities(
        &state, deployment, kind, params, power,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::{BsConfig, RisConfig};
    use crate::traffic::build_grid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_deployment(rng: &mut ChaCha8Rng, nb: usize, nm: usize, nt: usize, nr: usize) -> Deployment {
        let power = PowerModel::reference();
        let mut shares: Vec<f64> = (0..nb).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sum: f64 = shares.iter().sum();
        shares.iter_mut().for_each(|s| *s *= power.b_max / sum);
        Deployment {
            bs: shares
                .into_iter()
                .map(|b| BsConfig {
                    location: Point::new(rng.gen_range(0.0..2000.0), rng.gen_range(0.0..2000.0)),
                    beams: (0..nt)
                        .map(|_| {
                            (0..nt)
                                .map(|_| c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                                .collect()
                        })
                        .collect(),
                    bandwidth: b,
                })
                .collect(),
            ris: (0..nm)
                .map(|_| RisConfig {
                    location: Point::new(rng.gen_range(0.0..2000.0), rng.gen_range(0.0..2000.0)),
                    phases: (0..nr).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn snr_examples() {
        let p = PropagationParams::reference();
        let h = vec![c(1.0, 2.0), c(-0.5, 0.1)];
        assert_eq!(received_snr(&h, &[vec![c(0.0, 0.0); 2]], 1e6, &p), Some(0.0));
        assert_eq!(received_snr(&h, &[vec![c(1.0, 0.0); 2]], 0.0, &p), None);
        // h^T w = sqrt(sigma^2 B) exactly for a single-entry channel.
        let b = 1e7;
        let amp = (p.noise_psd * b).sqrt();
        let snr = received_snr(&[c(1.0, 0.0)], &[vec![c(amp, 0.0)]], b, &p).unwrap();
        assert_relative_eq!(snr, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn snr_matches_scalar_oracle() {
        let p = PropagationParams::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let h: Vec<Complex64> = (0..4).map(|_| c(rng.gen(), rng.gen())).collect();
            let beams: Vec<Vec<Complex64>> = (0..3)
                .map(|_| (0..4).map(|_| c(rng.gen(), rng.gen())).collect())
                .collect();
            let mut total = 0.0;
            for w in &beams {
                let (mut re, mut im) = (0.0, 0.0);
                for k in 0..4 {
                    re += h[k].re * w[k].re - h[k].im * w[k].im;
                    im += h[k].re * w[k].im + h[k].im * w[k].re;
                }
                total += re * re + im * im;
            }
            let oracle = total / (p.noise_psd * 2e6);
            assert_relative_eq!(received_snr(&h, &beams, 2e6, &p).unwrap(), oracle, max_relative = 1e-12);
        }
    }

    fn single_bs(beam: Vec<Complex64>, bandwidth: f64) -> Deployment {
        let nt = beam.len();
        let mut beams = vec![vec![c(0.0, 0.0); nt]; nt];
        beams[0] = beam;
        Deployment {
            bs: vec![BsConfig {
                location: Point::new(0.0, 0.0),
                beams,
                bandwidth,
            }],
            ris: vec![],
        }
    }

    #[test]
    fn capacity_examples() {
        let p = PropagationParams {
            shadow_sigma_db: 0.0,
            ..PropagationParams::reference()
        };
        let power = PowerModel::reference();
        let user = Point::new(30.0, 40.0);
        let zero = single_bs(vec![c(0.0, 0.0)], 1e7);
        assert_eq!(capacity_at(user, &zero, &p, &power, 0).unwrap(), 0.0);
        assert_eq!(capacity_lower_bound_at(user, &zero, &p, &power, 0).unwrap(), 0.0);

        // Choose the beam so the SNR is exactly one.
        let b = 1e7;
        let h = hybrid_channel(user, &zero, &p, 0).unwrap();
        let amp = (p.noise_psd * b).sqrt() / h[0][0].norm();
        let dep = single_bs(vec![h[0][0].conj() / h[0][0].norm() * amp], b);
        assert_relative_eq!(
            capacity_at(user, &dep, &p, &power, 0).unwrap(),
            1e7,
            max_relative = 1e-12
        );
    }

    #[test]
    fn lower_bound_coincides_at_full_bandwidth() {
        let p = PropagationParams::reference();
        let power = PowerModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut dep = random_deployment(&mut rng, 1, 2, 4, 9);
        dep.bs[0].bandwidth = power.b_max;
        let user = Point::new(700.0, 800.0);
        let a = capacity_at(user, &dep, &p, &power, 3).unwrap();
        let b = capacity_lower_bound_at(user, &dep, &p, &power, 3).unwrap();
        assert_eq!(a, b);
    }

    /// Independent evaluation of the Shannon sum with explicit shadowed links.
    #[test]
    fn table_one_point_matches_straight_line_oracle() {
        use crate::propagation::{path_loss_amplitude, shadow_db, steering, user_key, LinkId};
        let p = PropagationParams::reference();
        let power = PowerModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dep = random_deployment(&mut rng, 3, 2, 16, 9);
        let user = Point::new(1234.5, 876.5);
        let seed = 8;
        let h3 = |pt: Point, z: f64| pt.at_height(z);
        let az = |a: Point, b: Point| (b.y - a.y).atan2(b.x - a.x);
        let mut oracle = 0.0;
        for (n, bs) in dep.bs.iter().enumerate() {
            let lbu = path_loss_amplitude(
                h3(bs.location, p.bs_height_m),
                h3(user, p.user_height_m),
                &p,
                shadow_db(
                    seed,
                    LinkId::BsUser {
                        bs: n,
                        user: user_key(user),
                    },
                    &p,
                ),
            )
            .unwrap();
            let mut h: Vec<Complex64> = steering(az(bs.location, user), 16, &p)
                .iter()
                .map(|a| a / lbu)
                .collect();
            for (m, r) in dep.ris.iter().enumerate() {
                let lbr = path_loss_amplitude(
                    h3(bs.location, p.bs_height_m),
                    h3(r.location, p.ris_height_m),
                    &p,
                    shadow_db(seed, LinkId::BsRis { bs: n, ris: m }, &p),
                )
                .unwrap();
                let lru = path_loss_amplitude(
                    h3(r.location, p.ris_height_m),
                    h3(user, p.user_height_m),
                    &p,
                    shadow_db(
                        seed,
                        LinkId::RisUser {
                            ris: m,
                            user: user_key(user),
                        },
                        &p,
                    ),
                )
                .unwrap();
                let v = steering(az(bs.location, r.location), 16, &p);
                let b = steering(az(r.location, bs.location), 9, &p);
                let cc = steering(az(r.location, user), 9, &p);
                for k in 0..16 {
                    for j in 0..9 {
                        h[k] += v[k] * b[j] * Complex64::from_polar(1.0, r.phases[j]) * cc[j] / (lbr * lru);
                    }
                }
            }
            let mut s = 0.0;
            for w in &bs.beams {
                let mut y = c(0.0, 0.0);
                for k in 0..16 {
                    y += h[k] * w[k];
                }
                s += y.norm_sqr();
            }
            oracle += bs.bandwidth * (1.0 + s / (p.noise_psd * bs.bandwidth)).log2();
        }
        let got = capacity_at(user, &dep, &p, &power, seed).unwrap();
        assert_relative_eq!(got, oracle, max_relative = 1e-9);
    }

    #[test]
    fn lower_bound_never_exceeds_capacity() {
        let p = PropagationParams::reference();
        let power = PowerModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..1000 {
            let nb = rng.gen_range(1..4);
            let nm = rng.gen_range(0..3);
            let dep = random_deployment(&mut rng, nb, nm, 2, 3);
            let user = Point::new(rng.gen_range(0.0..2000.0), rng.gen_range(0.0..2000.0));
            let ct = capacity_at(user, &dep, &p, &power, trial).unwrap();
            let cs = capacity_lower_bound_at(user, &dep, &p, &power, trial).unwrap();
            assert!(cs <= ct * (1.0 + 1e-12), "trial {trial}: {cs} > {ct}");
        }
    }

    #[test]
    fn power_examples() {
        let power = PowerModel::reference();
        assert_eq!(bs_power(&[vec![c(0.0, 0.0); 4]], &power), 100.0);
        let full = vec![vec![c(60f64.sqrt(), 0.0)]];
        assert_relative_eq!(bs_power(&full, &power), 100.0 + 60.0 / 0.38, max_relative = 1e-14);
        assert_relative_eq!(bs_power(&full, &power), 257.894_736_842, max_relative = 1e-9);
        let unit = PowerModel {
            lambda_amp: 1.0,
            ..power
        };
        assert_eq!(bs_power(&[vec![c(1.0, 0.0)]], &unit), 101.0);

        let zero_bs = BsConfig {
            location: Point::default(),
            beams: vec![vec![c(0.0, 0.0)]],
            bandwidth: 1.0,
        };
        let ris = RisConfig {
            location: Point::default(),
            phases: vec![0.0],
        };
        let dep = Deployment {
            bs: vec![zero_bs.clone(); 36],
            ris: vec![ris; 36],
        };
        assert_eq!(total_power(&dep, &power), 3708.0);
        let lone = Deployment {
            bs: vec![zero_bs],
            ris: vec![],
        };
        assert_eq!(total_power(&lone, &power), 100.0);
    }

    #[test]
    fn power_decomposes_over_bs() {
        let power = PowerModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let dep = random_deployment(&mut rng, 5, 3, 4, 2);
            let parts: f64 = dep.bs.iter().map(|b| bs_power(&b.beams, &power)).sum::<f64>()
                + dep.ris.len() as f64 * power.p_circuit_ris;
            assert_relative_eq!(total_power(&dep, &power), parts, max_relative = 1e-12);
        }
    }

    #[test]
    fn field_examples() {
        let p = PropagationParams::reference();
        let power = PowerModel::reference();
        let grid = build_grid(2000.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dep = random_deployment(&mut rng, 1, 2, 4, 9);
        let field = capacity_field(&dep, &grid, &p, &power, 4, CapacityKind::Total).unwrap();
        for (v, &u) in field.values().iter().zip(grid.centers()) {
            let pt = capacity_at(u, &dep, &p, &power, 4).unwrap();
            assert_relative_eq!(*v, pt, max_relative = 1e-12);
        }
        let lb = capacity_field(&dep, &grid, &p, &power, 4, CapacityKind::LowerBound).unwrap();
        for (v, &u) in lb.values().iter().zip(grid.centers()) {
            let pt = capacity_lower_bound_at(u, &dep, &p, &power, 4).unwrap();
            assert_relative_eq!(*v, pt, max_relative = 1e-12);
        }

        let mut zero = dep.clone();
        for w in zero.bs[0].beams.iter_mut().flatten() {
            *w = c(0.0, 0.0);
        }
        let f0 = capacity_field(&zero, &grid, &p, &power, 4, CapacityKind::Total).unwrap();
        assert!(f0.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn field_is_invariant_to_bs_order_without_shadowing() {
        let p = PropagationParams {
            shadow_sigma_db: 0.0,
            ..PropagationParams::reference()
        };
        let power = PowerModel::reference();
        let grid = build_grid(2000.0, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dep = random_deployment(&mut rng, 3, 2, 4, 4);
        let mut rev = dep.clone();
        rev.bs.reverse();
        let a = capacity_field(&dep, &grid, &p, &power, 0, CapacityKind::Total).unwrap();
        let b = capacity_field(&rev, &grid, &p, &power, 0, CapacityKind::Total).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_relative_eq!(*x, *y, max_relative = 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn scaling_beams_raises_capacity(seed in 0u64..1000, scale in 1.01f64..4.0) {
            let p = PropagationParams::reference();
            let power = PowerModel::reference();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dep = random_deployment(&mut rng, 2, 1, 2, 3);
            let mut louder = dep.clone();
            for w in louder.bs.iter_mut().flat_map(|b| b.beams.iter_mut().flatten()) {
                *w *= scale;
            }
            let user = Point::new(rng.gen_range(0.0..2000.0), rng.gen_range(0.0..2000.0));
            let h = hybrid_channel(user, &dep, &p, seed).unwrap();
            for (n, hn) in h.iter().enumerate() {
                let a = received_snr(hn, &dep.bs[n].beams, dep.bs[n].bandwidth, &p).unwrap();
                let b = received_snr(hn, &louder.bs[n].beams, dep.bs[n].bandwidth, &p).unwrap();
                if a > 0.0 { prop_assert!(b > a); }
            }
            let c0 = capacity_at(user, &dep, &p, &power, seed).unwrap();
            let c1 = capacity_at(user, &louder, &p, &power, seed).unwrap();
            prop_assert!(c1 > c0);
        }

        #[test]
        fn capacity_is_linear_in_bandwidth_at_fixed_snr(snr in 0.01f64..1e6, b in 1e3f64..1e9, k in 1.1f64..10.0) {
            let p = PropagationParams::reference();
            let power = PowerModel::reference();
            // Holding the SNR fixed means the signal power scales with the bandwidth.
            let s = snr * p.noise_psd * b;
            let c1 = bs_capacity(s, b, CapacityKind::Total, &p, &power);
            let c2 = bs_capacity(s * k, b * k, CapacityKind::Total, &p, &power);
            prop_assert!((c2 - k * c1).abs() <= 1e-12 * c2);
        }
    }
}
