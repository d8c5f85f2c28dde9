//! Bundled model files.

use crate::model::{load_model, PkmModel};

/// Six-limb 6-UPS Gough-Stewart platform with synthetic inertia.
pub const GSP_JSON: &str = include_str!("../fixtures/gsp.json");

/// Planar 3-RRR with the first joint of each limb actuated; 2-DOF
/// translational platform driven by three actuators.
pub const PLANAR_JSON: &str = include_str!("../fixtures/planar_3rrr.json");

pub fn gsp() -> PkmModel {
    load_model(GSP_JSON).expect("bundled GSP fixture is valid")
}

pub fn planar() -> PkmModel {
    load_model(PLANAR_JSON).expect("bundled planar fixture is valid")
}
