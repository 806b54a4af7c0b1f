//! Numerical engine for metric-compatible Finsler gravity.
//!
//! Layers, bottom up: [`jetcalc`] (exact derivatives, inversion, quadrature),
//! [`finsler_core`] (generating functions and their canonical structures),
//! [`nholon`] (N-connections, adapted frames, d-metrics), [`dconn`] and [`dcurv`]
//! (distinguished connections, torsion, curvature), [`ansatzgen`] (separated
//! field equations and exact off-diagonal solutions) and [`cosmo`] (diagonal
//! anisotropic cosmology and the KP soliton).

pub mod jetcalc;
pub mod dconn;
pub mod dcurv;
pub mod finsler_core;
pub mod nholon;
pub mod ansatzgen;
pub mod cosmo;
pub mod cli;
