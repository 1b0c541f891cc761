//! Experiment configuration file and flag merging.
//!
//! The JSON file carries the grid keys `L, T, kappa, Nx, Nt` and a
//! `sensors` list at top level, plus optional blocks for the other module
//! configs. Flags override the file; every violated constraint is collected
//! and reported in one error.

use std::path::Path;

use serde::Deserialize;
use tobs::burgers::{BurgersConfig, SensorLayout};
use tobs::error::Error;
use tobs::filter::{DatagenConfig, TrainConfig};
use tobs::observability::GramianConfig;
use tobs::ukf::UkfConfig;

/// Sizes of the `reproduce table1` pipeline.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Config {
    /// Trajectories per dataset (3 samples each).
    pub trajectories: usize,
    /// Samples for the averaged observability index.
    pub index_samples: usize,
    /// Sensor noise of the "with noise" rows.
    pub noise_sd: f64,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            trajectories: 10_000,
            index_samples: 2_000,
            noise_sd: 0.028,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(rename = "L")]
    pub l: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub kappa: Option<f64>,
    #[serde(rename = "Nx")]
    pub nx: Option<usize>,
    #[serde(rename = "Nt")]
    pub nt: Option<usize>,
    /// Interior sensor indices; overrides the `--case` layouts.
    pub sensors: Option<Vec<usize>>,
    pub gramian: Option<GramianConfig>,
    pub ukf: Option<UkfConfig>,
    pub datagen: Option<DatagenConfig>,
    pub train: Option<TrainConfig>,
    pub table1: Option<Table1Config>,
}

/// Fully resolved configuration for one invocation.
#[derive(Clone, Debug)]
pub struct Setup {
    pub burgers: BurgersConfig,
    pub sensors: SensorLayout,
    pub gramian: GramianConfig,
    pub ukf: UkfConfig,
    pub datagen: DatagenConfig,
    pub train: TrainConfig,
    pub table1: Table1Config,
}

impl ExperimentFile {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", p.display()))?;
                let file: Self = serde_json::from_str(&text)
                    .map_err(|e| anyhow::anyhow!("config {}: {e}", p.display()))?;
                Ok(file)
            }
        }
    }

    /// Merge file values over defaults and apply flag overrides, then
    /// validate everything at once.
    pub fn resolve(
        &self,
        case: Option<u8>,
        target: Option<usize>,
        horizon: Option<usize>,
    ) -> anyhow::Result<Setup> {
        let mut burgers = BurgersConfig::default();
        if let Some(v) = self.l {
            burgers.domain_length = v;
        }
        if let Some(v) = self.t {
            burgers.final_time = v;
        }
        if let Some(v) = self.kappa {
            burgers.kappa = v;
        }
        if let Some(v) = self.nx {
            burgers.space_intervals = v;
        }
        if let Some(v) = self.nt {
            burgers.time_steps = v;
        }

        let sensors = match (&self.sensors, case) {
            (Some(indices), _) => SensorLayout::new(indices.clone()),
            (None, Some(c)) => SensorLayout::for_case(c)?,
            (None, None) => SensorLayout::case1(),
        };

        let mut gramian = self.gramian.clone().unwrap_or_default();
        let mut datagen = self.datagen.clone().unwrap_or_default();
        if let Some(t) = target {
            gramian.target = t;
            datagen.target = t;
        }
        if let Some(k1) = horizon {
            // Flags give the window length K+1, matching the paper's
            // "K+1 = 10" phrasing.
            if k1 < 2 {
                return Err(Error::InvalidConfig {
                    violations: vec![format!("horizon (window length K+1) must be >= 2, got {k1}")],
                }
                .into());
            }
            gramian.horizon = k1 - 1;
            datagen.horizon = k1 - 1;
        }

        let ukf = self.ukf.clone().unwrap_or_default();
        let train = self.train.clone().unwrap_or_default();
        let table1 = self.table1.clone().unwrap_or_default();

        let mut violations = Vec::new();
        let mut collect = |result: tobs::Result<()>| {
            if let Err(Error::InvalidConfig { violations: v }) = result {
                violations.extend(v);
            }
        };
        collect(burgers.validate());
        if burgers.validate().is_ok() {
            collect(sensors.validate(&burgers));
            collect(gramian.validate(burgers.state_dim()));
        }
        collect(ukf.validate());
        collect(train.validate());
        if table1.trajectories < 1 {
            violations.push("table1.trajectories must be >= 1".into());
        }
        if table1.index_samples < 1 {
            violations.push("table1.index_samples must be >= 1".into());
        }
        if !(table1.noise_sd.is_finite() && table1.noise_sd >= 0.0) {
            violations.push(format!(
                "table1.noise_sd must be finite and nonnegative, got {}",
                table1.noise_sd
            ));
        }
        if !violations.is_empty() {
            return Err(Error::InvalidConfig { violations }.into());
        }

        Ok(Setup {
            burgers,
            sensors,
            gramian,
            ukf,
            datagen,
            train,
            table1,
        })
    }
}
