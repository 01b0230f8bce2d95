//! Tabular regression engine for hourly irradiance forecasting.
//!
//! Data preparation, correlation-filter feature selection, CART forests,
//! histogram gradient boosting (free and oblivious trees), an MLP trained
//! with Adam, Gaussian-process Bayesian tuning over k-fold CV, exact
//! TreeSHAP attribution, and the evaluation harness tying them together.

pub mod dataset;
pub mod eval;
pub mod explain;
pub mod features;
pub mod hexfloat;
pub mod matrix;
pub mod mlp;
pub mod model;
pub mod rng;
pub mod trees;
pub mod tuner;

pub use matrix::Matrix;
