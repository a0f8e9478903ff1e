pub mod cli;
pub mod config;
pub mod distance_field;
pub mod error;
pub mod evaluation;
pub mod filter;
pub mod geometry;
pub mod io;
pub mod localizer;
pub mod measurement;
pub mod optimizer;
pub mod simulator;
pub mod stats;
