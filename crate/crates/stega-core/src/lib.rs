#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod anomaly;
pub mod budget;
pub mod cost;
pub mod dft;
pub mod embed;
pub mod fusion;
pub mod gbdt;
pub mod image;
pub mod linalg;
pub mod math;
pub mod model;
pub mod train;
pub mod rng;
pub mod saab;
pub mod spots;
pub mod synth;
