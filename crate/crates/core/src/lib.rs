//! Simulation and trace-fitting toolkit for open fiber Fabry-Perot
//! microcavities that contain a birefringent dielectric membrane.
//!
//! The crate is organised bottom-up:
//!
//! * [`materials`] media, layers and Bragg stacks
//! * [`tmm`] the normal-incidence transfer-matrix engine and field profiles
//! * [`cavity`] assembled fiber/gap/membrane/mirror systems
//! * [`purcell`] mode volume and Purcell-factor bookkeeping
//! * [`analysis`] least-squares fitting of measured traces
//! * [`config`] TOML run configuration and the shipped presets

pub mod analysis;
pub mod config;
pub mod cavity;
pub mod error;
pub mod materials;
pub mod purcell;
pub mod tmm;

pub use config::Config;
pub use error::{Error, ErrorKind, Result};
pub use materials::{Layer, Medium, Polarization, StackSpec, Termination};
