//! Core algorithms for the gamestock return forecaster.
//!
//! The crate is `no_std` + `alloc`: it works purely on in-memory data and
//! leaves files, configuration, and the command line to the `gamestock`
//! binary crate. Modules follow the pipeline order: `panel` prepares aligned
//! market data, `wavelet` and `temporal` build per-stock embeddings, `graph`
//! propagates them over stock/industry/investor relations, `game` derives
//! event signals and equilibrium targets, `model` and `train` tie everything
//! into a trainable forecaster, `metrics` scores predictions, and `synth`
//! generates seeded markets with a planted, analytically known signal.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod game;
pub mod graph;
pub mod mat;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod panel;
pub mod rng;
pub mod synth;
pub mod temporal;
pub mod train;
pub mod wavelet;
