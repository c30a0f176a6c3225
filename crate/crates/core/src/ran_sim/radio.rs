use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CellConfig, Position};

/// Distances below this are clamped so the log term stays finite.
pub const MIN_DISTANCE_M: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams {
    pub path_loss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub decorrelation_distance_m: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self { path_loss_exponent: 3.0, shadowing_sigma_db: 4.0, decorrelation_distance_m: 5.0 }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent > 0.0) {
            return Err(("radio.path_loss_exponent", "must be finite and > 0".into()));
        }
        if !(self.shadowing_sigma_db.is_finite() && self.shadowing_sigma_db >= 0.0) {
            return Err(("radio.shadowing_sigma_db", "must be finite and >= 0".into()));
        }
        if !(self.decorrelation_distance_m.is_finite() && self.decorrelation_distance_m > 0.0) {
            return Err(("radio.decorrelation_distance_m", "must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// Mean RSRP from the log-distance model, without shadowing.
pub fn path_loss_rsrp(cell: &CellConfig, position: Position, path_loss_exponent: f64) -> f64 {
    let d = cell.position.distance(&position).max(MIN_DISTANCE_M);
    cell.tx_power_ref_dbm - 10.0 * path_loss_exponent * d.log10()
}

pub fn compute_rsrp(cell: &CellConfig, position: Position, radio: &RadioParams, shadow_db: f64) -> f64 {
    path_loss_rsrp(cell, position, radio.path_loss_exponent) + shadow_db
}

/// First-order autoregressive log-normal shadowing, one independent stream
/// per cell. The correlation between consecutive values decays with the
/// distance the UE moved: `rho = exp(-moved / decorrelation_distance)`.
#[derive(Debug, Clone)]
pub struct ShadowingProcess {
    sigma_db: f64,
    decorrelation_m: f64,
    values: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
}

impl ShadowingProcess {
    pub fn new(seed: u64, cells: usize, sigma_db: f64, decorrelation_m: f64) -> Self {
        let mut rngs: Vec<ChaCha8Rng> = (0..cells)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64 + 1);
                rng
            })
            .collect();
        let values = rngs
            .iter_mut()
            .map(|rng| {
                let z: f64 = StandardNormal.sample(rng);
                sigma_db * z
            })
            .collect();
        Self { sigma_db, decorrelation_m, values, rngs }
    }

    pub fn value(&self, cell_index: usize) -> f64 {
        self.values[cell_index]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Advances every cell's process after the UE moved `moved_m` meters.
    pub fn advance(&mut self, moved_m: f64) {
        let rho = (-moved_m.max(0.0) / self.decorrelation_m).exp();
        let innovation = self.sigma_db * (1.0 - rho * rho).max(0.0).sqrt();
        for (v, rng) in self.values.iter_mut().zip(self.rngs.iter_mut()) {
            let z: f64 = StandardNormal.sample(rng);
            *v = rho * *v + innovation * z;
        }
    }
}
