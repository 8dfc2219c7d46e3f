use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Method;
use crate::error::{Error, Result};
use crate::eval::{PredictiveConfig, VALIDATION_INDIVIDUALS};
use crate::mcmc::McmcConfig;
use crate::msle::MslConfig;
use crate::vb::VbConfig;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "MXL_WORKERS";

const MAX_INDIVIDUALS: usize = (1 << 20) - 1;
const MAX_OCCASIONS: usize = (1 << 10) - 1;
const MAX_REPLICATIONS: usize = 1 << 16;

/// A scenario × N × T × replication grid and the settings of every method.
///
/// The TOML file mirrors the struct; omitted keys take defaults, which for the
/// `[mcmc]`, `[msle]` and `[predictive]` tables depend on `desk_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenarios: Vec<u8>,
    pub individuals: Vec<usize>,
    pub occasions: Vec<usize>,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub desk_scale: bool,
    pub validation_individuals: usize,
    /// Write each cell's estimate JSON next to its metrics.
    pub save_estimates: bool,
    pub mcmc: McmcConfig,
    pub vb: VbConfig,
    pub msle: MslConfig,
    pub predictive: PredictiveConfig,
}

impl ExperimentConfig {
    /// Defaults for a given scale: desk scale shortens MCMC chains and
    /// reduces simulation draws; otherwise the original study's counts.
    pub fn defaults(desk_scale: bool) -> Self {
        let (mcmc, msle, predictive) = if desk_scale {
            (McmcConfig::default(), MslConfig::default(), PredictiveConfig::default())
        } else {
            (
                McmcConfig {
                    iterations: 100_000,
                    burn_in: 50_000,
                    ..McmcConfig::default()
                },
                MslConfig {
                    draws: 1000,
                    ..MslConfig::default()
                },
                PredictiveConfig::full(),
            )
        };
        Self {
            scenarios: vec![1],
            individuals: vec![500],
            occasions: vec![5],
            replications: if desk_scale { 5 } else { 20 },
            methods: Method::ALL.to_vec(),
            seed: 1,
            output_dir: PathBuf::from("results"),
            desk_scale,
            validation_individuals: VALIDATION_INDIVIDUALS,
            save_estimates: true,
            mcmc,
            vb: VbConfig::default(),
            msle,
            predictive,
        }
    }

    /// Parses TOML text, filling omitted keys from [`Self::defaults`].
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
        let desk = match user.get("desk_scale") {
            None => true,
            Some(toml::Value::Boolean(b)) => *b,
            Some(_) => return Err(Error::config("desk_scale", "must be a boolean")),
        };
        if let Some(methods) = user.get("methods") {
            let list = methods
                .as_array()
                .ok_or_else(|| Error::config("methods", "must be a list of method names"))?;
            for m in list {
                m.as_str()
                    .ok_or_else(|| Error::config("methods", "must be a list of method names"))?
                    .parse::<Method>()?;
            }
        }
        let mut merged = toml::Table::try_from(Self::defaults(desk)).map_err(|e| Error::config("<defaults>", e.to_string()))?;
        merge(&mut merged, user);
        let config: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<config>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if self.replications > MAX_REPLICATIONS {
            return Err(Error::config("replications", format!("must not exceed {MAX_REPLICATIONS}")));
        }
        for (field, empty) in [
            ("scenarios", self.scenarios.is_empty()),
            ("individuals", self.individuals.is_empty()),
            ("occasions", self.occasions.is_empty()),
            ("methods", self.methods.is_empty()),
        ] {
            if empty {
                return Err(Error::config(field, "must not be empty"));
            }
        }
        if let Some(s) = self.scenarios.iter().find(|s| !(1..=4).contains(*s)) {
            return Err(Error::config("scenarios", format!("contains {s}; expected values in 1..=4")));
        }
        if self.individuals.iter().any(|&n| n == 0 || n > MAX_INDIVIDUALS) {
            return Err(Error::config("individuals", format!("entries must lie in 1..={MAX_INDIVIDUALS}")));
        }
        if self.occasions.iter().any(|&t| t == 0 || t > MAX_OCCASIONS) {
            return Err(Error::config("occasions", format!("entries must lie in 1..={MAX_OCCASIONS}")));
        }
        for (field, dup) in [
            ("scenarios", has_duplicates(&self.scenarios)),
            ("individuals", has_duplicates(&self.individuals)),
            ("occasions", has_duplicates(&self.occasions)),
            ("methods", has_duplicates(&self.methods)),
        ] {
            if dup {
                return Err(Error::config(field, "must not contain duplicates"));
            }
        }
        if self.validation_individuals == 0 {
            return Err(Error::config("validation_individuals", "must be at least 1"));
        }
        self.mcmc.validate().map_err(|e| prefix("mcmc", e))?;
        if !(self.vb.tolerance > 0.0) || self.vb.window == 0 || self.vb.max_iter == 0 || self.vb.qmc_draws == 0 {
            return Err(Error::config(
                "vb",
                "tolerance must be positive and window, max_iter and qmc_draws at least 1",
            ));
        }
        if self.msle.draws == 0 || self.msle.conditional_draws == 0 || self.msle.max_iter == 0 {
            return Err(Error::config("msle", "draws, conditional_draws and max_iter must be at least 1"));
        }
        self.predictive.validate()
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Config { field, constraint } => Error::config(format!("{section}.{field}"), constraint),
        other => other,
    }
}

fn has_duplicates<T: std::hash::Hash + Eq>(v: &[T]) -> bool {
    let mut seen = HashSet::new();
    !v.iter().all(|x| seen.insert(x))
}

/// Overlays `user` on `base`, recursing into nested tables.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Reads and validates an experiment config file.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml(&text).map_err(|e| match e {
        Error::Config { field, constraint } if field == "<file>" => Error::schema(path, constraint),
        other => other,
    })
}

/// Alias of [`validate_config`].
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    validate_config(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_methods_default_to_full_set() {
        let c = ExperimentConfig::from_toml("replications = 2\n").unwrap();
        assert_eq!(c.methods, Method::ALL.to_vec());
        assert_eq!(c.replications, 2);
        assert_eq!(c.mcmc.iterations, 20_000);
    }

    #[test]
    fn zero_replications_names_the_field() {
        let err = ExperimentConfig::from_toml("replications = 0\n").unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "replications"), "{err}");
        assert!(err.to_string().contains("at least 1"));
    }

    #[test]
    fn ncvmp_qmc_is_unsupported() {
        let err = ExperimentConfig::from_toml("methods = [\"MCMC\", \"VB-NCVMP-QMC\"]\n").unwrap_err();
        assert!(matches!(err, Error::UnsupportedMethod { .. }), "{err}");
    }

    #[test]
    fn nested_tables_are_merged_and_scale_dependent() {
        let c = ExperimentConfig::from_toml("desk_scale = false\n[mcmc]\nthin = 10\n").unwrap();
        assert_eq!((c.mcmc.iterations, c.mcmc.burn_in, c.mcmc.thin), (100_000, 50_000, 10));
        assert_eq!(c.msle.draws, 1000);
        assert_eq!(c.predictive, PredictiveConfig::full());
        let err = ExperimentConfig::from_toml("[mcmc]\nburn_in = 30000\n").unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "mcmc.burn_in"), "{err}");
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("replication = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[vb]\ntol = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("scenarios = [5]\n").is_err());
        assert!(ExperimentConfig::from_toml("individuals = []\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::defaults(true);
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }
}
