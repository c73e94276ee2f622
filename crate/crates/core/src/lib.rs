//! Rigid-origami kinematics and rigidity analysis.

pub mod analysis;
pub mod collision;
pub mod constraints;
pub mod fixtures;
pub mod genericity;
pub mod kinematics;
pub mod linalg;
pub mod model;
pub mod newton;
pub mod singlevertex;
pub mod tracking;
