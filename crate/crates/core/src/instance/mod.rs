//! Problem instances: on-disk format and reproducible synthesis.
//!
//! An instance directory holds `manifest.json` plus the CSV files listed in
//! [`INPUT_FILES`]. `distance_matrix.csv` is optional and overrides the
//! Euclidean centroid distances.

mod io;
mod synth;

use serde::{Deserialize, Serialize};

use crate::domain::{
    DistanceBinning, Establishment, FlowTarget, MakeUseTable, PortFlow, SolverWeights, Zone,
};
use crate::international::TradeBounds;
use crate::pairing::{DistanceMatrix, RatingCoefficients};

pub use io::{load_instance, save_instance, INPUT_FILES};
pub use synth::{sample_external_establishments, synthesize_instance, SynthesisConfig, ZonalTargets};

pub const DEFAULT_MICRO_THRESHOLD: f64 = 10.0;
pub const DEFAULT_INTRA_ZONAL_MILES: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Instance {
    pub zones: Vec<Zone>,
    pub establishments: Vec<Establishment>,
    pub make_use: MakeUseTable,
    pub flow_targets: Vec<FlowTarget>,
    pub binning: DistanceBinning,
    pub weights: SolverWeights,
    pub port_flows: Vec<PortFlow>,
    pub rng_seed: u64,
    /// Receivers with fewer employees are micro receivers.
    pub micro_threshold: f64,
    pub intra_zonal_miles: f64,
    pub rating: RatingCoefficients,
    pub trade_bounds: TradeBounds,
    /// Nearest-supplier cap used when the calibration targets were built.
    pub max_suppliers: Option<usize>,
    #[serde(skip)]
    pub distance_matrix: Option<DistanceMatrix>,
}

impl Instance {
    pub fn establishment_index(&self, id: &str) -> Option<usize> {
        self.establishments.iter().position(|e| e.id == id)
    }

    pub fn total_demand(&self) -> f64 {
        self.establishments.iter().map(Establishment::demand).sum()
    }

    pub fn total_capacity(&self) -> f64 {
        self.establishments.iter().map(Establishment::capacity).sum()
    }

    /// Recomputes `is_micro` from the threshold.
    pub fn refresh_micro_flags(&mut self) {
        let t = self.micro_threshold;
        for e in &mut self.establishments {
            e.is_micro = e.employment < t;
        }
    }
}

/// Scalar settings stored in `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Manifest {
    pub weights: SolverWeights,
    pub seed: u64,
    /// Lower edges of the distance bins in miles; the last bin is unbounded.
    /// Must agree with `bin_targets.csv` when present.
    pub bin_edges: Option<Vec<f64>>,
    pub micro_threshold: f64,
    pub intra_zonal_miles: f64,
    pub trade_bounds: TradeBounds,
    pub rating: RatingCoefficients,
    pub max_suppliers: Option<usize>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            weights: SolverWeights::default(),
            seed: 0,
            bin_edges: None,
            micro_threshold: DEFAULT_MICRO_THRESHOLD,
            intra_zonal_miles: DEFAULT_INTRA_ZONAL_MILES,
            trade_bounds: TradeBounds::default(),
            rating: RatingCoefficients::default(),
            max_suppliers: None,
        }
    }
}
