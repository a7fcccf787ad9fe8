//! Feedforward-controlled photon subtraction for Fock state conversion.
//!
//! The crate plans the adaptive beam-splitter schemes that convert `|m⟩` into
//! `|n⟩` with the highest possible success probability, analyses how the
//! `|2⟩ → |1⟩` schemes degrade with detector inefficiency and optical loss,
//! and checks every analytic result against two stochastic references: a
//! trajectory Monte Carlo and an emulator of a post-selected coincidence
//! experiment.
//!
//! | module | contents |
//! |---|---|
//! | [`fock`] | photon-number states, beam splitters, losses, detectors |
//! | [`planner`] | optimal probability tables, policy trees, exact policy evaluation |
//! | [`tradeoff`] | success probability vs single-photon fraction under loss |
//! | [`montecarlo`] | seeded trajectory sampling of any policy |
//! | [`coincidence`] | six-detector coincidence experiment emulation |
//! | [`cli`] | the `fockconv` command line |
//!
//! ```
//! use fockconv::planner::{build_policy, evaluate_policy};
//! use fockconv::fock::DetectorModel;
//!
//! let policy = build_policy(2, 1, 2).unwrap();
//! let eval = evaluate_policy(&policy, 2, &DetectorModel::ideal()).unwrap();
//! assert!((eval.success_probability - 2.0 / 3.0).abs() < 1e-12);
//! ```

pub mod cli;
pub mod coincidence;
pub mod error;
pub mod fock;
pub mod montecarlo;
pub mod output;
pub mod planner;
pub mod tradeoff;

pub use error::{Error, Result};
