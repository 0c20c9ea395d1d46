//! Direct and RIS-cascaded channels between base stations and users.
//!
//! Every element carries a uniform linear array with its axis along `y`, so a
//! link's steering phase depends only on the sine of its planar azimuth.
//! Path loss divides the amplitude: `L(d) = gamma_pl * d^alpha + beta`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{Point, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationParams {
    /// Amplitude path-loss exponent.
    pub alpha: f64,
    /// Amplitude path-loss coefficient.
    pub gamma_pl: f64,
    pub beta: f64,
    pub bs_height_m: f64,
    pub ris_height_m: f64,
    pub user_height_m: f64,
    /// Log-normal shadowing deviation in dB; zero disables shadowing.
    pub shadow_sigma_db: f64,
    /// Noise power spectral density, W/Hz.
    pub noise_psd: f64,
    pub carrier_wavelength_m: f64,
    pub element_spacing_m: f64,
}

impl PropagationParams {
    /// Power path loss of `35 + 38 log10(d)` dB, 10 dB shadowing, -174 dBm/Hz noise.
    pub fn reference() -> Self {
        PropagationParams {
            alpha: 1.9,
            gamma_pl: 10f64.powf(35.0 / 20.0),
            beta: 1.0,
            bs_height_m: 35.0,
            ris_height_m: 10.0,
            user_height_m: 1.5,
            shadow_sigma_db: 10.0,
            noise_psd: dbm_per_hz_to_watts(-174.0),
            carrier_wavelength_m: 0.05,
            element_spacing_m: 0.025,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("alpha", self.alpha > 0.0),
            ("gamma_pl", self.gamma_pl > 0.0),
            ("beta", self.beta >= 0.0),
            ("shadow_sigma_db", self.shadow_sigma_db >= 0.0),
            ("noise_psd", self.noise_psd > 0.0),
            ("carrier_wavelength_m", self.carrier_wavelength_m > 0.0),
            ("element_spacing_m", self.element_spacing_m > 0.0),
            ("bs_height_m", self.bs_height_m.is_finite()),
            ("ris_height_m", self.ris_height_m.is_finite()),
            ("user_height_m", self.user_height_m.is_finite()),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::validation(name, "out of range"));
            }
        }
        Ok(())
    }

    /// Phase advance between adjacent array elements per unit azimuth sine.
    pub fn phase_per_element(&self) -> f64 {
        2.0 * PI * self.element_spacing_m / self.carrier_wavelength_m
    }
}

pub fn dbm_per_hz_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsConfig {
    pub location: Point,
    /// One beamforming vector per beam, in sqrt(W).
    pub beams: Vec<Vec<Complex64>>,
    /// Allocated bandwidth in Hz.
    pub bandwidth: f64,
}

impl BsConfig {
    pub fn beam_power(&self) -> f64 {
        self.beams.iter().flatten().map(|w| w.norm_sqr()).sum()
    }

    pub fn n_antennas(&self) -> usize {
        self.beams.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisConfig {
    pub location: Point,
    /// Reflection phase per element, radians.
    pub phases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub bs: Vec<BsConfig>,
    pub ris: Vec<RisConfig>,
}

impl Deployment {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .bs
            .first()
            .ok_or_else(|| Error::invalid("deployment needs at least one BS"))?;
        let nt = first.n_antennas();
        for (n, bs) in self.bs.iter().enumerate() {
            if bs.beams.len() != nt || bs.beams.iter().any(|w| w.len() != nt) {
                return Err(Error::invalid(format!("BS {n} needs {nt} beams of length {nt}")));
            }
            if !(bs.bandwidth >= 0.0 && bs.bandwidth.is_finite()) {
                return Err(Error::invalid(format!("BS {n} has invalid bandwidth")));
            }
        }
        if let Some(r0) = self.ris.first() {
            if self.ris.iter().any(|r| r.phases.len() != r0.phases.len()) {
                return Err(Error::invalid("RIS element counts differ"));
            }
        }
        Ok(())
    }

    pub fn n_antennas(&self) -> usize {
        self.bs.first().map_or(0, BsConfig::n_antennas)
    }

    pub fn n_elements(&self) -> usize {
        self.ris.first().map_or(0, |r| r.phases.len())
    }
}

/// Amplitude divisor of one link, including an optional shadowing draw in dB.
pub fn path_loss_amplitude(
    src: Point3,
    dst: Point3,
    params: &PropagationParams,
    shadow_db: Option<f64>,
) -> Result<f64> {
    let d = src.distance(dst);
    if d == 0.0 {
        return Err(Error::DegenerateGeometry("zero link distance".into()));
    }
    let l = params.gamma_pl * d.powf(params.alpha) + params.beta;
    Ok(match shadow_db {
        Some(x) => l * 10f64.powf(x / 20.0),
        None => l,
    })
}

/// Array response toward `azimuth` (radians from the array broadside).
pub fn steering(azimuth: f64, n_elements: usize, params: &PropagationParams) -> Vec<Complex64> {
    steering_from_sine(azimuth.sin(), n_elements, params.phase_per_element())
}

pub(crate) fn steering_from_sine(sine: f64, n: usize, phase_per_element: f64) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::cis(phase_per_element * k as f64 * sine))
        .collect()
}

/// Sine of the planar azimuth of `to` seen from `from`; zero when co-located in the plane.
pub fn link_sine(from: Point, to: Point) -> f64 {
    let rho = from.distance(to);
    if rho == 0.0 {
        0.0
    } else {
        (to.y - from.y) / rho
    }
}

/// Identity of a propagation link, used to key its frozen shadowing draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkId {
    BsUser { bs: usize, user: u64 },
    RisUser { ris: usize, user: u64 },
    BsRis { bs: usize, ris: usize },
}

impl LinkId {
    fn stream(self) -> u64 {
        let (tag, a, b) = match self {
            LinkId::BsUser { bs, user } => (1u64, bs as u64, user),
            LinkId::RisUser { ris, user } => (2, ris as u64, user),
            LinkId::BsRis { bs, ris } => (3, bs as u64, ris as u64),
        };
        mix64(tag ^ mix64(a ^ mix64(b)))
    }
}

/// Stable key of a user position for shadowing lookups.
pub fn user_key(p: Point) -> u64 {
    mix64(p.x.to_bits() ^ mix64(p.y.to_bits()))
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Frozen shadowing draw in dB for a link, or `None` when shadowing is off.
pub fn shadow_db(seed: u64, link: LinkId, params: &PropagationParams) -> Option<f64> {
    if params.shadow_sigma_db == 0.0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(link.stream());
    let z: f64 = rng.sample(StandardNormal);
    Some(params.shadow_sigma_db * z)
}

/// Amplitude gain `1/L` of a link together with the shadowing draw.
pub(crate) fn link_gain(src: Point3, dst: Point3, params: &PropagationParams, seed: u64, link: LinkId) -> Result<f64> {
    Ok(1.0 / path_loss_amplitude(src, dst, params, shadow_db(seed, link, params))?)
}

/// Channel vector of every BS toward `user`, direct plus all single-bounce RIS paths.
pub fn hybrid_channel(
    user: Point,
    deployment: &Deployment,
    params: &PropagationParams,
    seed: u64,
) -> Result<Vec<Vec<Complex64>>> {
    let nt = deployment.n_antennas();
    let kr = params.phase_per_element();
    let ukey = user_key(user);
    let user3 = user.at_height(params.user_height_m);

    let ris_user: Vec<(f64, Vec<Complex64>)> = deployment
        .ris
        .iter()
        .enumerate()
        .map(|(m, r)| {
            let g = link_gain(
                r.location.at_height(params.ris_height_m),
                user3,
                params,
                seed,
                LinkId::RisUser { ris: m, user: ukey },
            )?;
            let a = steering_from_sine(link_sine(r.location, user), r.phases.len(), kr);
            Ok((g, a))
        })
        .collect::<Result<_>>()?;

    deployment
        .bs
        .iter()
        .enumerate()
        .map(|(n, bs)| {
            let bs3 = bs.location.at_height(params.bs_height_m);
            let g = link_gain(bs3, user3, params, seed, LinkId::BsUser { bs: n, user: ukey })?;
            let mut h: Vec<Complex64> = steering_from_sine(link_sine(bs.location, user), nt, kr)
                .into_iter()
                .map(|a| a * g)
                .collect();
            for (m, ris) in deployment.ris.iter().enumerate() {
                let g_br = link_gain(
                    bs3,
                    ris.location.at_height(params.ris_height_m),
                    params,
                    seed,
                    LinkId::BsRis { bs: n, ris: m },
                )?;
                let v = steering_from_sine(link_sine(bs.location, ris.location), nt, kr);
                let b = steering_from_sine(link_sine(ris.location, bs.location), ris.phases.len(), kr);
                let (g_ru, c) = &ris_user[m];
                let reflect: Complex64 = b
                    .iter()
                    .zip(&ris.phases)
                    .zip(c)
                    .map(|((bj, phi), cj)| bj * Complex64::cis(*phi) * cj)
                    .sum();
                let coef = reflect * g_br * g_ru;
                for (hk, vk) in h.iter_mut().zip(&v) {
                    *hk += vk * coef;
                }
            }
            Ok(h)
        })
        .collect()
}
