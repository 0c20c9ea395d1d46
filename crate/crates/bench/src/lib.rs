//! Shared fixtures for the benchmarks.

use iree_core::solver::Scenario;
use iree_core::traffic::{build_grid, synth_traffic, TrafficProfile};
use iree_core::{PowerModel, PropagationParams};

/// Desk-sized scenario: 6 BSs, 6 RISs, 40x40 cells over 5 km.
pub fn desk_scenario(seed: u64) -> Scenario {
    let grid = build_grid(5000.0, 40).expect("grid");
    let traffic = synth_traffic(&grid, &TrafficProfile::urban(1e11), seed).expect("traffic");
    Scenario {
        grid,
        traffic,
        n_bs: 6,
        n_ris: 6,
        n_t_bs: 4,
        n_t_ris: 9,
        propagation: PropagationParams::reference(),
        power: PowerModel::reference(),
        zeta_min: 0.5,
        seed,
    }
}
