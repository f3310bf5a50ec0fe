//! Decentralized optimization with compressed communication.
//!
//! The crate simulates gradient tracking (GT), compressed gradient tracking
//! (C-GT) and its error-feedback variant (EF-C-GT) over a synchronous network
//! of agents, and builds the nonnegative error-system matrices whose spectral
//! radius certifies linear convergence for a given parameter choice.
//!
//! Modules, bottom up:
//!
//! - [`topology`]: graphs, doubly stochastic weights and spectral data
//! - [`compression`]: compression operators and their `(C, delta, r)` profiles
//! - [`problems`]: ridge-regression instances with exact optimum and constants
//! - [`algorithms`]: GT, C-GT and EF-C-GT in reference and message-passing form
//! - [`analysis`]: error-system matrices, certificates and rate fitting
//!
//! ```
//! use cgt_core::{algorithms, compression::CompressorKind, problems, topology};
//!
//! let g = topology::Graph::ring(10, false).unwrap();
//! let w = topology::WeightMatrix::from_out_degree(&g, &[0.1; 10]).unwrap();
//! let pb = problems::generate_ridge(&problems::RidgeSpec::standard(13)).unwrap();
//! let hp = algorithms::HyperParams::new(0.09, 1.0, 1.0, 1.0);
//! let kind: CompressorKind = "quant:b=2,q=inf".parse().unwrap();
//! let run = algorithms::Simulation::new(
//!     &pb, &w, algorithms::Variant::CgtEfficient, kind, hp, 1,
//! )
//! .unwrap()
//! .run(3000, 100)
//! .unwrap();
//! assert!(run.trace.last().unwrap().residual < 1e-5);
//! ```

pub mod algorithms;
pub mod analysis;
pub mod compression;
pub mod exec;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod topology;

pub use exec::Execution;
