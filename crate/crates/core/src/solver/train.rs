//! Adam training of one parameter block with an accept-if-improved guard.

use super::objective::{Coupling, Objective};
use crate::error::{Error, Result};
use crate::grad::{adam_step, AdamConfig, AdamState};
use crate::params::{pack, unpack, BlockId};
use crate::propagation::Deployment;

/// Result of one block-training call.
#[derive(Debug, Clone)]
pub struct BlockOutcome {
    /// Lowest-loss iterate seen, which is never worse than the start.
    pub deployment: Deployment,
    pub start_loss: f64,
    pub best_loss: f64,
    /// Loss of every visited iterate, starting point included.
    pub losses: Vec<f64>,
}

pub fn train_with(
    objective: &Objective<'_>,
    dep: &Deployment,
    block: BlockId,
    coupling: Coupling,
    iters: usize,
    adam: AdamConfig,
) -> Result<BlockOutcome> {
    let bounds = objective.scenario.bounds();
    let (start, mut g) = if iters == 0 {
        (objective.loss(dep)?, Vec::new())
    } else {
        objective.gradient(dep, block, coupling)?
    };
    let mut best = (start.loss, dep.clone());
    let mut losses = vec![start.loss];
    let mut x = pack(dep, block);
    let mut state = AdamState::new(x.len(), adam);
    let mut current = dep.clone();
    for t in 0..iters {
        adam_step(&mut state, &g, &mut x)?;
        current = unpack(&x, block, &current, &bounds)?;
        x = pack(&current, block);
        let last = t + 1 == iters;
        let step = if last {
            objective.loss(&current).map(|terms| (terms, Vec::new()))
        } else {
            objective.gradient(&current, block, coupling)
        };
        match step {
            Ok((terms, next)) => {
                losses.push(terms.loss);
                if terms.loss < best.0 {
                    best = (terms.loss, current.clone());
                }
                g = next;
            }
            Err(e @ Error::GradientEvaluation { .. }) | Err(e @ Error::DegenerateGeometry(_)) => {
                log::warn!("block training stopped at step {t}: {e}");
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(BlockOutcome {
        deployment: best.1,
        start_loss: start.loss,
        best_loss: best.0,
        losses,
    })
}
