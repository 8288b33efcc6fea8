//! Traffic fingerprinting workbench.
//!
//! The Bag-of-Gaussians attack models each page load as a bag of
//! request/response burst pairs, scores those pairs against Gaussians fitted
//! per remote domain, classifies with multinomial logistic regression and
//! decodes whole browsing sessions with a hidden Markov model over the site's
//! link graph. Baseline attacks, padding defenses and a seeded synthetic
//! traffic generator sit alongside it.

pub mod classifiers;
pub mod defenses;
pub mod error;
pub mod features;
pub mod harness;
pub mod hmm;
pub mod label;
pub mod sitegraph;
pub mod synth;
pub mod trace;
pub mod util;

pub use error::{Error, Result};
pub use label::Label;
