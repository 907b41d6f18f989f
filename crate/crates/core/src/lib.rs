//! Compiled Shor factoring on classically entangled Laguerre-Gaussian beams.
//!
//! The orbital angular momentum (OAM) of an LG beam carries the control
//! register and its polarization carries the work register. The crate is
//! layered the same way the optics are:
//!
//! - [`modespace`]: exact linear algebra on the OAM ⊗ polarization basis
//!   (input preparation, modular exponentiation, projection, DFT).
//! - [`lgfield`]: the physical LG mode amplitude and associated Laguerre
//!   polynomials.
//! - [`elements`]: operator models of beam splitters, spiral phase plates,
//!   Dove prisms, sorters and SLMs, plus a DAG simulator and builders for
//!   the modular-exponentiation and DFT light paths.
//! - [`interference`]: four-hole source sampling, point-source diffraction
//!   rendering, fringe signatures and readout classification.
//! - [`shor`]: pipeline orchestration, order extraction, factor recovery
//!   and brute-force oracles.
//! - [`figures`]: the single-mode, modular-exponentiation and DFT panels.
//! - [`imageio`]: 16-bit PGM / CSV output with JSON sidecars.
//!
//! ```
//! use shor_optics::shor::{run_pipeline, PipelineConfig, PipelineMode};
//! use shor_optics::modespace::ShorProblem;
//!
//! let problem = ShorProblem::new(15, 11, 2).unwrap();
//! let run = run_pipeline(&problem, &PipelineConfig::new(PipelineMode::Abstract)).unwrap();
//! assert_eq!(run.readout.r, Some(2));
//! assert_eq!(run.readout.factors, Some((3, 5)));
//! ```

pub mod elements;
pub mod error;
pub mod figures;
pub mod imageio;
pub mod interference;
pub mod lgfield;
pub mod modespace;
pub mod shor;

pub use error::{Error, Result};
