//! Physics-informed neural PDE surrogates with three uncertainty
//! quantification backends: Hamiltonian Monte Carlo, deep ensembles, and
//! Monte-Carlo dropout, for forward and inverse problems on the 1-D Burgers
//! equation and the 2-D incompressible Navier-Stokes equations.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod experiment;
pub mod hmc;
pub mod inverse;
pub mod mlp;
pub mod oracles;
pub mod pde;
pub mod render;
pub mod rng;
pub mod stats;
pub mod training;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Uncertainty-quantification backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hmc,
    #[serde(rename = "de")]
    DeepEnsemble,
    #[serde(rename = "mcd")]
    McDropout,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Hmc => "hmc",
            Method::DeepEnsemble => "de",
            Method::McDropout => "mcd",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hmc" => Ok(Method::Hmc),
            "de" => Ok(Method::DeepEnsemble),
            "mcd" => Ok(Method::McDropout),
            other => Err(Error::Usage(format!(
                "unknown method {other:?} (expected hmc, de, or mcd)"
            ))),
        }
    }
}
