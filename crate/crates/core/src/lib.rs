//! Core of the uDrive toolchain: the driving-preference rule language, its
//! execution engine, a deterministic driving simulator and traffic-law
//! robustness scoring.

pub mod catalog;
pub mod dsl;
pub mod params;
pub mod engine;
pub mod scene;
pub mod sim;
pub mod compliance;
pub mod bench;
