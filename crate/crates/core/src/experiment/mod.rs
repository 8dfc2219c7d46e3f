//! Simulation-study driver: method dispatch, grid configuration, resumable
//! execution and table emission.

mod config;
mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::ChoiceDataset;
use crate::error::{Error, Result};
use crate::estimate::EstimateFile;
use crate::mcmc::{run_mcmc, McmcConfig};
use crate::msle::{run_msle, MslConfig};
use crate::vb::{run_vb, Hyperparameters, Variant, VbConfig, VbTrace};

pub use config::{load_config, validate_config, ExperimentConfig, WORKERS_ENV};
pub use run::{
    cell_seed, collect_results, run_experiment, stored_config, write_reports, CellId, CellResult, ExperimentOutcome, Failure,
    DATA_SLOT,
};

/// An estimator selectable from the command line or a config file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Mcmc,
    Vb(Variant),
    Msle,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Mcmc,
        Method::Vb(Variant::NcvmpDelta),
        Method::Vb(Variant::NcvmpMji),
        Method::Vb(Variant::QnDelta),
        Method::Vb(Variant::QnQmc),
        Method::Vb(Variant::QnMji),
        Method::Msle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Mcmc => "MCMC",
            Method::Vb(v) => v.label(),
            Method::Msle => "MSLE",
        }
    }

    pub fn key(self) -> String {
        match self {
            Method::Mcmc => "mcmc".into(),
            Method::Vb(v) => format!("vb-{}", v.key()),
            Method::Msle => "msle".into(),
        }
    }

    /// Stable small integer used in seed derivation.
    pub fn index(self) -> u64 {
        Method::ALL.iter().position(|m| *m == self).expect("every method is listed") as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `mcmc`, `msle`, or a VB variant such as `vb-qn-mji`, case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mcmc" => Ok(Method::Mcmc),
            "msle" => Ok(Method::Msle),
            _ => s.parse().map(Method::Vb),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.label().to_string()
    }
}

/// Engine settings shared by every cell; seeds are overwritten per run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub mcmc: McmcConfig,
    pub vb: VbConfig,
    pub msle: MslConfig,
}

#[derive(Clone, Debug)]
pub struct MethodOutput {
    pub estimate: EstimateFile,
    pub trace: Option<VbTrace>,
}

/// Runs one estimator with the diffuse default priors.
pub fn estimate_with(dataset: &ChoiceDataset, method: Method, settings: &MethodSettings, seed: u64) -> Result<MethodOutput> {
    let hyper = Hyperparameters::diffuse(dataset.num_fixed(), dataset.num_random());
    match method {
        Method::Mcmc => {
            let config = McmcConfig { seed, ..settings.mcmc.clone() };
            let res = run_mcmc(dataset, &hyper, &config)?;
            Ok(MethodOutput {
                estimate: res.estimate_file()?,
                trace: None,
            })
        }
        Method::Vb(variant) => {
            let config = VbConfig { seed, ..settings.vb.clone() };
            let res = run_vb(dataset, &hyper, variant, &config)?;
            Ok(MethodOutput {
                estimate: res.estimate_file()?,
                trace: Some(res.trace),
            })
        }
        Method::Msle => {
            let config = MslConfig { seed, ..settings.msle.clone() };
            let res = run_msle(dataset, &config)?;
            Ok(MethodOutput {
                estimate: res.estimate_file(),
                trace: None,
            })
        }
    }
}
