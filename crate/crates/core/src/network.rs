//! Cached channel state of a whole deployment over the grid.
//!
//! Holds every link quantity needed to evaluate the received signal power
//! `S_n(q) = sum_i |h_n(q)^T w_{n,i}|^2` and to recompute it cheaply when a
//! single element moves. The cascade through RIS `m` is stored as the scalar
//! `kappa_nm(q) = g_br g_ru sum_j b_j e^{i phi_j} c_j(q)` multiplying the
//! BS-side steering vector `v_nm`.

use num_complex::Complex64;

use crate::error::Result;
use crate::geometry::Point;
use crate::propagation::{link_sine, path_loss_amplitude, shadow_db, user_key, Deployment, LinkId, PropagationParams};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Frozen shadowing gain multipliers for every link of a scenario.
#[derive(Debug, Clone)]
pub struct ShadowTable {
    n_users: usize,
    bs_user: Vec<f64>,
    ris_user: Vec<f64>,
    bs_ris: Vec<f64>,
    n_ris: usize,
}

impl ShadowTable {
    pub fn new(users: &[Point], n_bs: usize, n_ris: usize, params: &PropagationParams, seed: u64) -> Self {
        let mult = |link| shadow_db(seed, link, params).map_or(1.0, |x| 10f64.powf(-x / 20.0));
        let keys: Vec<u64> = users.iter().map(|&u| user_key(u)).collect();
        let mut bs_user = Vec::with_capacity(n_bs * users.len());
        for bs in 0..n_bs {
            bs_user.extend(keys.iter().map(|&user| mult(LinkId::BsUser { bs, user })));
        }
        let mut ris_user = Vec::with_capacity(n_ris * users.len());
        for ris in 0..n_ris {
            ris_user.extend(keys.iter().map(|&user| mult(LinkId::RisUser { ris, user })));
        }
        let mut bs_ris = Vec::with_capacity(n_bs * n_ris);
        for bs in 0..n_bs {
            bs_ris.extend((0..n_ris).map(|ris| mult(LinkId::BsRis { bs, ris })));
        }
        ShadowTable {
            n_users: users.len(),
            bs_user,
            ris_user,
            bs_ris,
            n_ris,
        }
    }

    fn bs_user(&self, n: usize) -> &[f64] {
        &self.bs_user[n * self.n_users..(n + 1) * self.n_users]
    }

    fn ris_user(&self, m: usize) -> &[f64] {
        &self.ris_user[m * self.n_users..(m + 1) * self.n_users]
    }

    fn bs_ris(&self, n: usize, m: usize) -> f64 {
        self.bs_ris[n * self.n_ris + m]
    }
}

/// Fixed inputs shared by every channel evaluation of one scenario.
#[derive(Clone, Copy)]
pub struct ChannelContext<'a> {
    pub users: &'a [Point],
    pub params: &'a PropagationParams,
    pub shadows: &'a ShadowTable,
}

/// RIS-to-user link of one RIS: per-user gain and element steering.
#[derive(Debug, Clone)]
pub(crate) struct RisUserLinks {
    pub gain: Vec<f64>,
    pub steer: Vec<Complex64>,
}

/// BS-to-RIS link: gain, BS-side steering `v` and RIS-side steering `b`.
#[derive(Debug, Clone)]
pub(crate) struct BsRisLink {
    pub gain: f64,
    pub v: Vec<Complex64>,
    pub b: Vec<Complex64>,
}

fn fill_steering(out: &mut [Complex64], sine: f64, k: f64) {
    let step = Complex64::cis(k * sine);
    let mut acc = Complex64::new(1.0, 0.0);
    for o in out.iter_mut() {
        *o = acc;
        acc *= step;
    }
}

impl<'a> ChannelContext<'a> {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    /// Direct channels `h^bu` of BS `n` at `loc`, laid out `[q][k]`.
    pub(crate) fn direct(&self, n: usize, loc: Point, nt: usize) -> Result<Vec<Complex64>> {
        let p = self.params;
        let k = p.phase_per_element();
        let src = loc.at_height(p.bs_height_m);
        let shadow = self.shadows.bs_user(n);
        let mut out = vec![ZERO; self.users.len() * nt];
        for (q, (&u, chunk)) in self.users.iter().zip(out.chunks_exact_mut(nt)).enumerate() {
            let g = shadow[q] / path_loss_amplitude(src, u.at_height(p.user_height_m), p, None)?;
            fill_steering(chunk, link_sine(loc, u), k);
            for c in chunk.iter_mut() {
                *c *= g;
            }
        }
        Ok(out)
    }

    pub(crate) fn ris_user(&self, m: usize, loc: Point, nr: usize) -> Result<RisUserLinks> {
        let p = self.params;
        let k = p.phase_per_element();
        let src = loc.at_height(p.ris_height_m);
        let shadow = self.shadows.ris_user(m);
        let mut gain = Vec::with_capacity(self.users.len());
        let mut steer = vec![ZERO; self.users.len() * nr];
        for (q, (&u, chunk)) in self.users.iter().zip(steer.chunks_exact_mut(nr)).enumerate() {
            gain.push(shadow[q] / path_loss_amplitude(src, u.at_height(p.user_height_m), p, None)?);
            fill_steering(chunk, link_sine(loc, u), k);
        }
        Ok(RisUserLinks { gain, steer })
    }

    pub(crate) fn bs_ris(&self, n: usize, m: usize, bs: Point, ris: Point, nt: usize, nr: usize) -> Result<BsRisLink> {
        let p = self.params;
        let k = p.phase_per_element();
        let l = path_loss_amplitude(bs.at_height(p.bs_height_m), ris.at_height(p.ris_height_m), p, None)?;
        let mut v = vec![ZERO; nt];
        let mut b = vec![ZERO; nr];
        fill_steering(&mut v, link_sine(bs, ris), k);
        fill_steering(&mut b, link_sine(ris, bs), k);
        Ok(BsRisLink {
            gain: self.shadows.bs_ris(n, m) / l,
            v,
            b,
        })
    }
}

/// Cascade scalars `kappa(q)` of one BS-RIS pair.
pub(crate) fn cascade(link: &BsRisLink, ru: &RisUserLinks, phases: &[f64], out: &mut [Complex64]) {
    let nr = phases.len();
    let e: Vec<Complex64> = link
        .b
        .iter()
        .zip(phases)
        .map(|(b, phi)| b * Complex64::cis(*phi) * link.gain)
        .collect();
    for (q, o) in out.iter_mut().enumerate() {
        let c = &ru.steer[q * nr..(q + 1) * nr];
        let mut acc = ZERO;
        for j in 0..nr {
            acc += e[j] * c[j];
        }
        *o = acc * ru.gain[q];
    }
}

/// `v^T w` for every beam.
pub(crate) fn project_beams(v: &[Complex64], beams: &[Vec<Complex64>]) -> Vec<Complex64> {
    beams
        .iter()
        .map(|w| v.iter().zip(w).map(|(a, b)| a * b).sum())
        .collect()
}

/// Complete channel state of a deployment over all users.
#[derive(Debug, Clone)]
pub struct ChannelState {
    pub(crate) nq: usize,
    pub(crate) nm: usize,
    pub(crate) nt: usize,
    pub(crate) nr: usize,
    /// `[n][q][k]`
    pub(crate) direct: Vec<Complex64>,
    pub(crate) ru: Vec<RisUserLinks>,
    /// `[n][m]`
    pub(crate) br: Vec<BsRisLink>,
    /// `[n][m][q]`
    pub(crate) kappa: Vec<Complex64>,
    /// `[n][m][i]`, projection of each beam on the BS-side steering toward RIS `m`.
    pub(crate) t: Vec<Complex64>,
    /// `[n][i][q]`, received amplitude `h^T w_i`.
    pub(crate) y: Vec<Complex64>,
    /// `[n][q]`, received signal power summed over beams.
    pub(crate) signal: Vec<f64>,
}

impl ChannelState {
    pub fn build(ctx: &ChannelContext<'_>, dep: &Deployment) -> Result<Self> {
        let nq = ctx.n_users();
        let nb = dep.bs.len();
        let nm = dep.ris.len();
        let nt = dep.n_antennas();
        let nr = dep.n_elements();

        let mut direct = Vec::with_capacity(nb * nq * nt);
        for (n, bs) in dep.bs.iter().enumerate() {
            direct.extend(ctx.direct(n, bs.location, nt)?);
        }
        let ru = dep
            .ris
            .iter()
            .enumerate()
            .map(|(m, r)| ctx.ris_user(m, r.location, nr))
            .collect::<Result<Vec<_>>>()?;
        let mut br = Vec::with_capacity(nb * nm);
        for (n, bs) in dep.bs.iter().enumerate() {
            for (m, r) in dep.ris.iter().enumerate() {
                br.push(ctx.bs_ris(n, m, bs.location, r.location, nt, nr)?);
            }
        }
        let mut kappa = vec![ZERO; nb * nm * nq];
        let mut t = Vec::with_capacity(nb * nm * nt);
        for n in 0..nb {
            for m in 0..nm {
                let link = &br[n * nm + m];
                let off = (n * nm + m) * nq;
                cascade(link, &ru[m], &dep.ris[m].phases, &mut kappa[off..off + nq]);
                t.extend(project_beams(&link.v, &dep.bs[n].beams));
            }
        }
        let mut state = ChannelState {
            nq,
            nm,
            nt,
            nr,
            direct,
            ru,
            br,
            kappa,
            t,
            y: vec![ZERO; nb * nt * nq],
            signal: vec![0.0; nb * nq],
        };
        for n in 0..nb {
            let mut y = vec![ZERO; nt * nq];
            let mut s = vec![0.0; nq];
            state.bs_response(
                &state.direct[n * nq * nt..(n + 1) * nq * nt],
                &state.kappa[n * nm * nq..(n + 1) * nm * nq],
                &state.t[n * nm * nt..(n + 1) * nm * nt],
                &dep.bs[n].beams,
                &mut y,
                &mut s,
            );
            state.y[n * nt * nq..(n + 1) * nt * nq].copy_from_slice(&y);
            state.signal[n * nq..(n + 1) * nq].copy_from_slice(&s);
        }
        Ok(state)
    }

    /// Received amplitudes `[i][q]` and powers `[q]` of one BS.
    pub(crate) fn bs_response(
        &self,
        direct: &[Complex64],
        kappa: &[Complex64],
        t: &[Complex64],
        beams: &[Vec<Complex64>],
        y: &mut [Complex64],
        signal: &mut [f64],
    ) {
        let (nq, nt, nm) = (self.nq, self.nt, self.nm);
        signal.iter_mut().for_each(|s| *s = 0.0);
        for (i, w) in beams.iter().enumerate() {
            let yi = &mut y[i * nq..(i + 1) * nq];
            for q in 0..nq {
                let h = &direct[q * nt..(q + 1) * nt];
                let mut acc = ZERO;
                for k in 0..nt {
                    acc += h[k] * w[k];
                }
                for m in 0..nm {
                    acc += kappa[m * nq + q] * t[m * nt + i];
                }
                yi[q] = acc;
                signal[q] += acc.norm_sqr();
            }
        }
    }

    pub fn n_users(&self) -> usize {
        self.nq
    }

    pub fn signal(&self, n: usize) -> &[f64] {
        &self.signal[n * self.nq..(n + 1) * self.nq]
    }

    pub(crate) fn direct_of(&self, n: usize) -> &[Complex64] {
        &self.direct[n * self.nq * self.nt..(n + 1) * self.nq * self.nt]
    }

    pub(crate) fn kappa_of(&self, n: usize) -> &[Complex64] {
        &self.kappa[n * self.nm * self.nq..(n + 1) * self.nm * self.nq]
    }

    pub(crate) fn t_of(&self, n: usize) -> &[Complex64] {
        &self.t[n * self.nm * self.nt..(n + 1) * self.nm * self.nt]
    }

    pub(crate) fn y_of(&self, n: usize) -> &[Complex64] {
        &self.y[n * self.nt * self.nq..(n + 1) * self.nt * self.nq]
    }

    /// Full channel vector `h_n(q)`.
    pub(crate) fn channel(&self, n: usize, q: usize, out: &mut [Complex64]) {
        let nt = self.nt;
        out.copy_from_slice(&self.direct_of(n)[q * nt..(q + 1) * nt]);
        for m in 0..self.nm {
            let kap = self.kappa[(n * self.nm + m) * self.nq + q];
            for (o, v) in out.iter_mut().zip(&self.br[n * self.nm + m].v) {
                *o += v * kap;
            }
        }
    }

    /// Signal powers of BS `n` when its links are replaced.
    pub(crate) fn signal_with(
        &self,
        direct: &[Complex64],
        kappa: &[Complex64],
        t: &[Complex64],
        beams: &[Vec<Complex64>],
    ) -> Vec<f64> {
        let mut y = vec![ZERO; self.nt * self.nq];
        let mut s = vec![0.0; self.nq];
        self.bs_response(direct, kappa, t, beams, &mut y, &mut s);
        s
    }
}
