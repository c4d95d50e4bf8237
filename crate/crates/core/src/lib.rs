//! Supplier selection and commodity assignment for freight agent-based models.
//!
//! The pipeline enumerates admissible supplier/receiver pairs, solves a
//! linear program that trades unmet demand against shipping cost, supplier
//! rating and calibration gaps (shipping-distance bins and inter-zonal
//! commodity flows), and assigns commodities to the selected pairs. A joint
//! formulation and a two-phase decomposition are both available. Port-level
//! import and export tonnage is allocated to large establishments by a
//! seeded sampling heuristic.

pub mod decompose;
pub mod domain;
pub mod error;
pub mod instance;
pub mod international;
pub mod lp;
pub mod models;
pub mod pairing;
pub mod report;

pub use error::{Error, Result};
