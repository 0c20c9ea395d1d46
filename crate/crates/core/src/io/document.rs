//! Versioned TOML scenario documents with reference-default parameters.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::capacity::PowerModel;
use crate::error::{Error, Result};
use crate::grad::AdamConfig;
use crate::propagation::{dbm_per_hz_to_watts, PropagationParams};
use crate::solver::{Scenario, SolverConfig};
use crate::traffic::{build_grid, synth_traffic, TrafficProfile};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioDocument {
    pub schema_version: u32,
    pub seed: u64,
    pub network: NetworkSection,
    pub traffic: TrafficSection,
    pub propagation: PropagationSection,
    pub power: PowerSection,
    pub constraints: ConstraintSection,
    pub solver: SolverSection,
    pub ablation: AblationSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub n_bs: usize,
    pub n_ris: usize,
    pub n_t_bs: usize,
    pub n_t_ris: usize,
    /// Side of the square service area.
    pub area_side_m: f64,
    /// Grid cells per side.
    pub grid_side: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Urban,
    Rural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub profile: ProfileKind,
    pub d_tot_bps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_location: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spread_per_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationSection {
    /// Power path loss at 1 m, dB.
    pub path_loss_db_at_1m: f64,
    /// Power path loss per decade of distance, dB.
    pub path_loss_db_per_decade: f64,
    /// Distance-independent amplitude term keeping the loss finite at zero range.
    pub beta: f64,
    pub bs_height_m: f64,
    pub ris_height_m: f64,
    pub user_height_m: f64,
    pub shadow_sigma_db: f64,
    pub noise_dbm_per_hz: f64,
    pub wavelength_m: f64,
    pub element_spacing_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSection {
    pub amplifier_efficiency: f64,
    pub p_circuit_bs_w: f64,
    pub p_circuit_ris_w: f64,
    pub p_max_w: f64,
    pub b_max_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintSection {
    pub zeta_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub inner_iters_bs: usize,
    pub inner_iters_ris: usize,
    pub kappa_factor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_stage2: Option<f64>,
    pub dinkelbach_eps: f64,
    pub max_outer_iters: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub fd_step_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    /// Training rounds of the alternating versus end-to-end comparison.
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub bs_values: Vec<usize>,
    pub ris_values: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Counts held fixed when fitting along the other axis.
    pub fixed_n_bs: usize,
    pub fixed_n_ris: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for ScenarioDocument {
    fn default() -> Self {
        ScenarioDocument {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            network: NetworkSection::default(),
            traffic: TrafficSection::default(),
            propagation: PropagationSection::default(),
            power: PowerSection::default(),
            constraints: ConstraintSection::default(),
            solver: SolverSection::default(),
            ablation: AblationSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            n_bs: 36,
            n_ris: 36,
            n_t_bs: 16,
            n_t_ris: 9,
            area_side_m: 5000.0,
            grid_side: 50,
        }
    }
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            profile: ProfileKind::Urban,
            d_tot_bps: 9.7e12,
            mu_location: None,
            sigma_scale: None,
            spread_per_m: None,
        }
    }
}

impl Default for PropagationSection {
    fn default() -> Self {
        PropagationSection {
            path_loss_db_at_1m: 35.0,
            path_loss_db_per_decade: 38.0,
            beta: 1.0,
            bs_height_m: 35.0,
            ris_height_m: 10.0,
            user_height_m: 1.5,
            shadow_sigma_db: 10.0,
            noise_dbm_per_hz: -174.0,
            wavelength_m: 0.05,
            element_spacing_m: 0.025,
        }
    }
}

impl Default for PowerSection {
    fn default() -> Self {
        PowerSection {
            amplifier_efficiency: 0.38,
            p_circuit_bs_w: 100.0,
            p_circuit_ris_w: 3.0,
            p_max_w: 60.0,
            b_max_hz: 6e9,
        }
    }
}

impl Default for ConstraintSection {
    fn default() -> Self {
        ConstraintSection { zeta_min: 0.8 }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        let c = SolverConfig::default();
        SolverSection {
            inner_iters_bs: c.inner_iters_bs,
            inner_iters_ris: c.inner_iters_ris,
            kappa_factor: c.kappa_factor,
            kappa_stage2: c.kappa_stage2,
            dinkelbach_eps: c.dinkelbach_eps,
            max_outer_iters: c.max_outer_iters,
            step_size: c.adam.step_size,
            beta1: c.adam.beta1,
            beta2: c.adam.beta2,
            epsilon: c.adam.epsilon,
            fd_step_m: c.fd_step_m,
        }
    }
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection { rounds: 10 }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            bs_values: vec![2, 4, 8, 16],
            ris_values: vec![0, 2, 4, 8],
            seeds: vec![0],
            fixed_n_bs: 4,
            fixed_n_ris: 4,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "results".into() }
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn backticked(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

impl ScenarioDocument {
    /// Parses and validates a document; omitted keys take their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let doc: ScenarioDocument = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            if message.starts_with("unknown field") || message.starts_with("unknown variant") {
                let field = backticked(&message).unwrap_or("?").to_string();
                return Error::Validation { field, message };
            }
            let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
            Error::Parse { line, column, message }
        })?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize document: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, message: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(field, message))
            }
        };
        check(
            self.schema_version == SCHEMA_VERSION,
            "schema_version",
            "unsupported version",
        )?;
        let n = &self.network;
        check(n.n_bs >= 1, "network.n_bs", "need at least one BS")?;
        check(n.n_t_bs >= 1, "network.n_t_bs", "need at least one antenna")?;
        check(n.n_t_ris >= 1, "network.n_t_ris", "need at least one element")?;
        check(
            n.area_side_m > 0.0 && n.area_side_m.is_finite(),
            "network.area_side_m",
            "must be positive",
        )?;
        check(n.grid_side >= 2, "network.grid_side", "must be at least 2")?;
        check(
            n.n_bs <= n.grid_side * n.grid_side,
            "network.n_bs",
            "more BSs than grid cells",
        )?;
        check(
            n.n_ris <= n.grid_side * n.grid_side,
            "network.n_ris",
            "more RISs than grid cells",
        )?;
        check(
            self.traffic.d_tot_bps > 0.0 && self.traffic.d_tot_bps.is_finite(),
            "traffic.d_tot_bps",
            "must be positive",
        )?;
        let p = &self.power;
        check(
            p.amplifier_efficiency > 0.0 && p.amplifier_efficiency <= 1.0,
            "power.amplifier_efficiency",
            "must lie in (0, 1]",
        )?;
        check(p.p_circuit_bs_w >= 0.0, "power.p_circuit_bs_w", "must be non-negative")?;
        check(
            p.p_circuit_ris_w >= 0.0,
            "power.p_circuit_ris_w",
            "must be non-negative",
        )?;
        check(p.p_max_w > 0.0, "power.p_max_w", "must be positive")?;
        check(p.b_max_hz > 0.0, "power.b_max_hz", "must be positive")?;
        check(
            (0.0..=1.0).contains(&self.constraints.zeta_min),
            "constraints.zeta_min",
            "must lie in [0, 1]",
        )?;
        check(
            self.propagation.shadow_sigma_db >= 0.0,
            "propagation.shadow_sigma_db",
            "must be non-negative",
        )?;
        check(self.propagation.beta >= 0.0, "propagation.beta", "must be non-negative")?;
        let s = &self.sweep;
        check(
            !s.bs_values.is_empty() && s.bs_values.iter().all(|&v| v >= 1),
            "sweep.bs_values",
            "need positive BS counts",
        )?;
        check(!s.ris_values.is_empty(), "sweep.ris_values", "must not be empty")?;
        check(!s.seeds.is_empty(), "sweep.seeds", "must not be empty")?;
        self.profile().validate()?;
        self.propagation_params().validate()?;
        self.solver_config().validate()
    }

    pub fn profile(&self) -> TrafficProfile {
        let t = &self.traffic;
        let base = match t.profile {
            ProfileKind::Urban => TrafficProfile::urban(t.d_tot_bps),
            ProfileKind::Rural => TrafficProfile::rural(t.d_tot_bps),
        };
        TrafficProfile {
            mu_location: t.mu_location.unwrap_or(base.mu_location),
            sigma_scale: t.sigma_scale.unwrap_or(base.sigma_scale),
            spread: t.spread_per_m.unwrap_or(base.spread),
            d_tot: t.d_tot_bps,
        }
    }

    /// Amplitude path loss `gamma d^alpha + beta` matching the dB-per-decade law in power.
    pub fn propagation_params(&self) -> PropagationParams {
        let p = &self.propagation;
        PropagationParams {
            alpha: p.path_loss_db_per_decade / 20.0,
            gamma_pl: 10f64.powf(p.path_loss_db_at_1m / 20.0),
            beta: p.beta,
            bs_height_m: p.bs_height_m,
            ris_height_m: p.ris_height_m,
            user_height_m: p.user_height_m,
            shadow_sigma_db: p.shadow_sigma_db,
            noise_psd: dbm_per_hz_to_watts(p.noise_dbm_per_hz),
            carrier_wavelength_m: p.wavelength_m,
            element_spacing_m: p.element_spacing_m,
        }
    }

    pub fn power_model(&self) -> PowerModel {
        let p = &self.power;
        PowerModel {
            lambda_amp: 1.0 / p.amplifier_efficiency,
            p_circuit_bs: p.p_circuit_bs_w,
            p_circuit_ris: p.p_circuit_ris_w,
            p_max: p.p_max_w,
            b_max: p.b_max_hz,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            inner_iters_bs: s.inner_iters_bs,
            inner_iters_ris: s.inner_iters_ris,
            kappa_factor: s.kappa_factor,
            kappa_stage2: s.kappa_stage2,
            dinkelbach_eps: s.dinkelbach_eps,
            max_outer_iters: s.max_outer_iters,
            adam: AdamConfig {
                step_size: s.step_size,
                beta1: s.beta1,
                beta2: s.beta2,
                epsilon: s.epsilon,
            },
            fd_step_m: s.fd_step_m,
        }
    }

    /// The scenario of one seed; the seed drives traffic, shadowing and clustering.
    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        let n = &self.network;
        let grid = build_grid(n.area_side_m, n.grid_side)?;
        let traffic = synth_traffic(&grid, &self.profile(), seed)?;
        let s = Scenario {
            grid,
            traffic,
            n_bs: n.n_bs,
            n_ris: n.n_ris,
            n_t_bs: n.n_t_bs,
            n_t_ris: n.n_t_ris,
            propagation: self.propagation_params(),
            power: self.power_model(),
            zeta_min: self.constraints.zeta_min,
            seed,
        };
        s.validate()?;
        Ok(s)
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioDocument> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioDocument::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_document_gives_table_defaults() {
        let d = ScenarioDocument::parse("").unwrap();
        assert_eq!((d.network.n_bs, d.network.n_ris), (36, 36));
        assert_eq!((d.network.n_t_bs, d.network.n_t_ris), (16, 9));
        assert_eq!(d.power.p_max_w, 60.0);
        assert_eq!(d.power.b_max_hz, 6e9);
        assert_eq!(d.constraints.zeta_min, 0.8);
        assert_eq!(d.power.p_circuit_bs_w, 100.0);
        assert_eq!(d.power.p_circuit_ris_w, 3.0);
        assert_eq!(d.power.amplifier_efficiency, 0.38);
        assert_eq!(d.propagation.shadow_sigma_db, 10.0);
        assert_eq!(d.propagation.noise_dbm_per_hz, -174.0);
        assert_eq!(d.propagation.bs_height_m, 35.0);
        assert_eq!(d.traffic.d_tot_bps, 9.7e12);
        assert_eq!(d.traffic.profile, ProfileKind::Urban);
        assert_eq!(d.propagation_params(), PropagationParams::reference());
        assert_eq!(d.power_model(), PowerModel::reference());
    }

    #[test]
    fn noise_converted_to_watts_per_hertz() {
        let d = ScenarioDocument::parse("").unwrap();
        assert_relative_eq!(
            d.propagation_params().noise_psd,
            3.981071705534952e-21,
            max_relative = 1e-12
        );
    }

    #[test]
    fn round_trip_is_exact() {
        let text = "seed = 7\n[network]\nn_bs = 6\n[traffic]\nprofile = \"rural\"\nspread_per_m = 0.002\n[solver]\nkappa_stage2 = 3.5\n";
        let a = ScenarioDocument::parse(text).unwrap();
        let b = ScenarioDocument::parse(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_toml().unwrap(), b.to_toml().unwrap());
    }

    #[test]
    fn malformed_text_reports_position() {
        match ScenarioDocument::parse("seed = 1\n[network\nn_bs = 2\n") {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column >= 1);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        match ScenarioDocument::parse("[network]\nn_bss = 3\n") {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "n_bss"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_value_names_field() {
        match ScenarioDocument::parse("[constraints]\nzeta_min = 1.5\n") {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "constraints.zeta_min"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn scenario_traffic_sums_to_total() {
        let d = ScenarioDocument::parse("[network]\ngrid_side = 12\n").unwrap();
        let s = d.scenario(3).unwrap();
        assert_relative_eq!(s.traffic.d_tot(), 9.7e12, max_relative = 1e-12);
        assert_eq!(s.grid.len(), 144);
    }
}
