//! Modeling, analysis and optimization of multi-hop all-optical relay links.

pub mod channel;
pub mod config;
pub mod constellation;
pub mod error_analysis;
pub mod lens;
pub mod montecarlo;
pub mod numerics;
pub mod optimizer;
pub mod relay;
pub mod workflows;
