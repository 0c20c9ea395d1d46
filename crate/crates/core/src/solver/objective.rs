//! Loss evaluation and gradients over a cached channel state.
//!
//! Beams, bandwidth logits and RIS phases get exact adjoint gradients through
//! the received powers. Locations use central differences on a cheap partial
//! recompute. [`Coupling::Full`] moves every link of the element and is what the
//! solver uses. [`Coupling::Decoupled`] holds the BS-RIS links fixed so a moving
//! element only changes its own access links (BS-user or RIS-user); it is the
//! cheaper surrogate of the dual-RBF reading and kept for comparison.

use num_complex::Complex64;
use std::f64::consts::LN_2;

use super::loss::{compose, resource_violation, Constraints, LossTerms};
use super::Scenario;
use crate::capacity::{bs_capacity, cell_capacities, total_power, CapacityKind};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::network::{cascade, project_beams, ChannelContext, ChannelState, ShadowTable};
use crate::params::{softmax, BlockId, Layout};
use crate::propagation::Deployment;

const KM: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Decoupled,
    Full,
}

/// Loss of one scenario at fixed Dinkelbach ratio and penalty weight.
pub struct Objective<'a> {
    pub scenario: &'a Scenario,
    shadows: ShadowTable,
    pub eta: f64,
    pub kappa: f64,
    /// Central-difference step for locations, meters.
    pub fd_step_m: f64,
}

struct Evaluation {
    state: ChannelState,
    cap: Vec<f64>,
    terms: LossTerms,
    dl_dc: Vec<f64>,
    resource: f64,
}

impl<'a> Objective<'a> {
    pub fn new(scenario: &'a Scenario, n_bs: usize, n_ris: usize, fd_step_m: f64) -> Self {
        let shadows = ShadowTable::new(
            scenario.grid.centers(),
            n_bs,
            n_ris,
            &scenario.propagation,
            scenario.seed,
        );
        Objective {
            scenario,
            shadows,
            eta: 0.0,
            kappa: 0.0,
            fd_step_m,
        }
    }

    fn ctx(&self) -> ChannelContext<'_> {
        ChannelContext {
            users: self.scenario.grid.centers(),
            params: &self.scenario.propagation,
            shadows: &self.shadows,
        }
    }

    pub fn constraints(&self) -> Constraints {
        self.scenario.constraints()
    }

    fn compose(&self, cap: &[f64], p_t: f64, resource: f64, want_grad: bool) -> Result<(LossTerms, Option<Vec<f64>>)> {
        let traffic = &self.scenario.traffic;
        compose(
            cap,
            traffic.values(),
            traffic.d_tot(),
            p_t,
            resource,
            &self.constraints(),
            self.eta,
            self.kappa,
            want_grad,
        )
    }

    fn evaluate(&self, dep: &Deployment, want_grad: bool) -> Result<Evaluation> {
        let s = self.scenario;
        let state = ChannelState::build(&self.ctx(), dep)?;
        let cap = cell_capacities(&state, dep, CapacityKind::LowerBound, &s.propagation, &s.power);
        let resource = resource_violation(dep, &self.constraints());
        let (terms, g) = self.compose(&cap, total_power(dep, &s.power), resource, want_grad)?;
        Ok(Evaluation {
            state,
            cap,
            terms,
            dl_dc: g.unwrap_or_default(),
            resource,
        })
    }

    /// Loss terms of a deployment.
    pub fn loss(&self, dep: &Deployment) -> Result<LossTerms> {
        Ok(self.evaluate(dep, false)?.terms)
    }

    /// Lower-bound capacity of every cell.
    pub fn capacities(&self, dep: &Deployment) -> Result<Vec<f64>> {
        Ok(self.evaluate(dep, false)?.cap)
    }

    /// Loss terms and the gradient in the packed layout of `block`.
    pub fn gradient(&self, dep: &Deployment, block: BlockId, coupling: Coupling) -> Result<(LossTerms, Vec<f64>)> {
        let ev = self.evaluate(dep, true)?;
        let layout = Layout::new(dep, block);
        let mut g = vec![0.0; layout.len];
        let s = self.scenario;
        let nq = ev.state.n_users();
        let noise_floor = s.propagation.noise_psd * s.power.b_max;

        // mu[n][q] = dL/dS_nq
        let mut mu = vec![0.0; dep.bs.len() * nq];
        for (n, bs) in dep.bs.iter().enumerate() {
            if bs.bandwidth <= 0.0 {
                continue;
            }
            let k = bs.bandwidth / LN_2;
            for (q, sig) in ev.state.signal(n).iter().enumerate() {
                mu[n * nq + q] = ev.dl_dc[q] * k / (noise_floor + sig);
            }
        }

        if block.has_bs() {
            self.beam_gradient(dep, &ev, &mu, &layout, &mut g);
            self.logit_gradient(dep, &ev, &layout, &mut g);
            for n in 0..dep.bs.len() {
                for axis in 0..2 {
                    let d = self.bs_location_derivative(dep, &ev, n, axis, coupling)?;
                    g[layout.bs_loc + 2 * n + axis] = d * KM;
                }
            }
        }
        if block.has_ris() {
            self.phase_gradient(dep, &ev, &mu, &layout, &mut g);
            for m in 0..dep.ris.len() {
                for axis in 0..2 {
                    let d = self.ris_location_derivative(dep, &ev, m, axis, coupling)?;
                    g[layout.ris_loc + 2 * m + axis] = d * KM;
                }
            }
        }
        Ok((ev.terms, g))
    }

    fn beam_gradient(&self, dep: &Deployment, ev: &Evaluation, mu: &[f64], layout: &Layout, g: &mut [f64]) {
        let st = &ev.state;
        let nq = st.n_users();
        let nt = layout.n_antennas;
        let p_max = self.scenario.power.p_max;
        let lambda = self.scenario.power.lambda_amp;
        let mut h = vec![Complex64::new(0.0, 0.0); nt];
        for (n, bs) in dep.bs.iter().enumerate() {
            let y = st.y_of(n);
            let mut acc = vec![Complex64::new(0.0, 0.0); nt * nt];
            for q in 0..nq {
                let w = mu[n * nq + q];
                if w == 0.0 {
                    continue;
                }
                st.channel(n, q, &mut h);
                for i in 0..nt {
                    let a = y[i * nq + q].conj() * (2.0 * w);
                    let row = &mut acc[i * nt..(i + 1) * nt];
                    for k in 0..nt {
                        row[k] += a * h[k];
                    }
                }
            }
            let over = bs.beam_power() - p_max > 1e-12 * p_max;
            let quad = 2.0 * (self.eta * lambda + if over { self.kappa } else { 0.0 });
            for i in 0..nt {
                for k in 0..nt {
                    let j = layout.beam_index(n, i, k);
                    let a = acc[i * nt + k];
                    let w = bs.beams[i][k];
                    g[j] = a.re + quad * w.re;
                    g[j + 1] = -a.im + quad * w.im;
                }
            }
        }
    }

    fn logit_gradient(&self, dep: &Deployment, ev: &Evaluation, layout: &Layout, g: &mut [f64]) {
        let s = self.scenario;
        let noise_floor = s.propagation.noise_psd * s.power.b_max;
        let dl_db: Vec<f64> = (0..dep.bs.len())
            .map(|n| {
                ev.state
                    .signal(n)
                    .iter()
                    .zip(&ev.dl_dc)
                    .map(|(sig, l)| l * (sig / noise_floor).ln_1p() / LN_2)
                    .sum()
            })
            .collect();
        let total: f64 = dep.bs.iter().map(|b| b.bandwidth).sum();
        let shares: Vec<f64> = if total > 0.0 {
            dep.bs.iter().map(|b| b.bandwidth / total).collect()
        } else {
            softmax(&vec![0.0; dep.bs.len()])
        };
        let mean: f64 = shares.iter().zip(&dl_db).map(|(a, b)| a * b).sum();
        for n in 0..dep.bs.len() {
            g[layout.logits + n] = s.power.b_max * shares[n] * (dl_db[n] - mean);
        }
    }

    fn phase_gradient(&self, dep: &Deployment, ev: &Evaluation, mu: &[f64], layout: &Layout, g: &mut [f64]) {
        let st = &ev.state;
        let nq = st.n_users();
        let nm = st.nm;
        let nt = st.nt;
        let nr = layout.n_elements;
        for (m, ris) in dep.ris.iter().enumerate() {
            let ru = &st.ru[m];
            let mut grad = vec![0.0; nr];
            for n in 0..dep.bs.len() {
                let y = st.y_of(n);
                let t = &st.t_of(n)[m * nt..(m + 1) * nt];
                let link = &st.br[n * nm + m];
                let mut z = vec![Complex64::new(0.0, 0.0); nr];
                for q in 0..nq {
                    let w = mu[n * nq + q];
                    if w == 0.0 {
                        continue;
                    }
                    let mut a = Complex64::new(0.0, 0.0);
                    for i in 0..nt {
                        a += y[i * nq + q].conj() * t[i];
                    }
                    let f = a * (w * ru.gain[q]);
                    let c = &ru.steer[q * nr..(q + 1) * nr];
                    for j in 0..nr {
                        z[j] += f * c[j];
                    }
                }
                for j in 0..nr {
                    let dk = Complex64::i() * link.b[j] * Complex64::cis(ris.phases[j]) * link.gain;
                    grad[j] += 2.0 * (dk * z[j]).re;
                }
            }
            g[layout.phases + m * nr..layout.phases + (m + 1) * nr].copy_from_slice(&grad);
        }
    }

    /// Loss after replacing the signal powers of some BSs.
    fn loss_with_signals(&self, dep: &Deployment, ev: &Evaluation, replaced: &[(usize, Vec<f64>)]) -> Result<f64> {
        let s = self.scenario;
        let mut cap = ev.cap.clone();
        for (n, sig) in replaced {
            let b = dep.bs[*n].bandwidth;
            for (q, (old, new)) in ev.state.signal(*n).iter().zip(sig).enumerate() {
                cap[q] += bs_capacity(*new, b, CapacityKind::LowerBound, &s.propagation, &s.power)
                    - bs_capacity(*old, b, CapacityKind::LowerBound, &s.propagation, &s.power);
            }
        }
        cap.iter_mut().for_each(|c| *c = c.max(0.0));
        Ok(self.compose(&cap, ev.terms.p_t, ev.resource, false)?.0.loss)
    }

    fn shifted(p: Point, axis: usize, h: f64) -> Point {
        if axis == 0 {
            Point::new(p.x + h, p.y)
        } else {
            Point::new(p.x, p.y + h)
        }
    }

    fn central<F: Fn(f64) -> Result<f64>>(&self, index: usize, f: F) -> Result<f64> {
        let h = self.fd_step_m;
        let up = f(h)?;
        let down = f(-h)?;
        for value in [up, down] {
            if !value.is_finite() {
                return Err(Error::GradientEvaluation { index, value });
            }
        }
        Ok((up - down) / (2.0 * h))
    }

    /// dL/d(location) of BS `n` along `axis`, per meter.
    fn bs_location_derivative(
        &self,
        dep: &Deployment,
        ev: &Evaluation,
        n: usize,
        axis: usize,
        coupling: Coupling,
    ) -> Result<f64> {
        let st = &ev.state;
        let ctx = self.ctx();
        let beams = &dep.bs[n].beams;
        self.central(2 * n + axis, |h| {
            let loc = Self::shifted(dep.bs[n].location, axis, h);
            let direct = ctx.direct(n, loc, st.nt)?;
            let sig = match coupling {
                Coupling::Decoupled => st.signal_with(&direct, st.kappa_of(n), st.t_of(n), beams),
                Coupling::Full => {
                    let mut kappa = vec![Complex64::new(0.0, 0.0); st.nm * st.nq];
                    let mut t = Vec::with_capacity(st.nm * st.nt);
                    for (m, ris) in dep.ris.iter().enumerate() {
                        let link = ctx.bs_ris(n, m, loc, ris.location, st.nt, st.nr)?;
                        cascade(&link, &st.ru[m], &ris.phases, &mut kappa[m * st.nq..(m + 1) * st.nq]);
                        t.extend(project_beams(&link.v, beams));
                    }
                    st.signal_with(&direct, &kappa, &t, beams)
                }
            };
            self.loss_with_signals(dep, ev, &[(n, sig)])
        })
    }

    /// dL/d(location) of RIS `m` along `axis`, per meter.
    fn ris_location_derivative(
        &self,
        dep: &Deployment,
        ev: &Evaluation,
        m: usize,
        axis: usize,
        coupling: Coupling,
    ) -> Result<f64> {
        let st = &ev.state;
        let ctx = self.ctx();
        let ris = &dep.ris[m];
        let (nq, nt, nm) = (st.nq, st.nt, st.nm);
        self.central(2 * m + axis, |h| {
            let loc = Self::shifted(ris.location, axis, h);
            let ru = ctx.ris_user(m, loc, st.nr)?;
            let mut replaced = Vec::with_capacity(dep.bs.len());
            let mut kappa = vec![Complex64::new(0.0, 0.0); nq];
            for (n, bs) in dep.bs.iter().enumerate() {
                let old_t = &st.t_of(n)[m * nt..(m + 1) * nt];
                let old_kappa = &st.kappa_of(n)[m * nq..(m + 1) * nq];
                let new_t = match coupling {
                    Coupling::Decoupled => {
                        cascade(&st.br[n * nm + m], &ru, &ris.phases, &mut kappa);
                        old_t.to_vec()
                    }
                    Coupling::Full => {
                        let link = ctx.bs_ris(n, m, bs.location, loc, nt, st.nr)?;
                        cascade(&link, &ru, &ris.phases, &mut kappa);
                        project_beams(&link.v, &bs.beams)
                    }
                };
                let y = st.y_of(n);
                let mut sig = vec![0.0; nq];
                for i in 0..nt {
                    for q in 0..nq {
                        let v = y[i * nq + q] - old_kappa[q] * old_t[i] + kappa[q] * new_t[i];
                        sig[q] += v.norm_sqr();
                    }
                }
                replaced.push((n, sig));
            }
            self.loss_with_signals(dep, ev, &replaced)
        })
    }
}
