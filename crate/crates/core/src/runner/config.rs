use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::analysis::{ClimateOptions, DimensionPolicy, DEFAULT_VPT_THRESHOLD};
use crate::dynamics::{GeneModelParams, LatticeParams, LorenzParams, SystemSpec};
use crate::error::{Error, Result};
use crate::readout::LagDistribution;
use crate::reservoir::Activation;
use crate::rng::derive_seed;

/// Experiment presets compiled into the binary, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("lorenz", include_str!("../../presets/lorenz.toml")),
    ("gene", include_str!("../../presets/gene.toml")),
    ("lattice", include_str!("../../presets/lattice.toml")),
    ("fig2a", include_str!("../../presets/fig2a.toml")),
    ("fig2b", include_str!("../../presets/fig2b.toml")),
    ("fig3a", include_str!("../../presets/fig3a.toml")),
    ("fig3b", include_str!("../../presets/fig3b.toml")),
];

/// Systems a `[system]` table can name.
pub const SYSTEM_PRESETS: &[&str] = &["lorenz", "gene", "lattice"];

const DEFAULT_SYSTEM_STEPS: usize = 20_000;

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| *src)
        .ok_or_else(|| Error::UnknownPreset {
            name: name.into(),
            available: preset_names().join(", "),
        })
}

/// A fully resolved experiment. Every field is explicit once resolution has
/// run, so serializing this value records every default in force.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed; every random stream of a run is derived from it.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    /// Output directory; `runs/<name>` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub system: SystemConfig,
    pub reservoir: ReservoirSection,
    pub readout: ReadoutSection,
    pub data: DataSection,
    pub predict: PredictSection,
    pub mc: McSection,
    pub sweep: SweepSection,
    pub dmi: DmiSection,
    pub dimtest: DimtestSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum SystemConfig {
    Lorenz(LorenzParams<f64>),
    Gene(GeneModelParams<f64>),
    Lattice(LatticeParams<f64>),
}

impl SystemConfig {
    /// Default parameters of a named system.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        Ok(match name {
            "lorenz" => Self::Lorenz(LorenzParams::standard(DEFAULT_SYSTEM_STEPS)),
            "gene" => Self::Gene(GeneModelParams::chaotic(DEFAULT_SYSTEM_STEPS)),
            "lattice" => Self::Lattice(LatticeParams::chaotic(
                20,
                20,
                DEFAULT_SYSTEM_STEPS,
                derive_seed(seed, "lattice", &[]),
            )),
            other => {
                return Err(Error::UnknownPreset {
                    name: other.into(),
                    available: SYSTEM_PRESETS.join(", "),
                })
            }
        })
    }

    pub fn spec(&self) -> SystemSpec<f64> {
        match self {
            Self::Lorenz(p) => SystemSpec::Lorenz(p.clone()),
            Self::Gene(p) => SystemSpec::Gene(p.clone()),
            Self::Lattice(p) => SystemSpec::Lattice(p.clone()),
        }
    }

    pub fn name(&self) -> &'static str {
        self.spec().name()
    }

    pub fn dt(&self) -> f64 {
        self.spec().dt()
    }

    pub fn n_steps(&self) -> usize {
        match self {
            Self::Lorenz(p) => p.n_steps,
            Self::Gene(p) => p.n_steps,
            Self::Lattice(p) => p.n_steps,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirSection {
    pub neurons: usize,
    pub spectral_radius: f64,
    pub input_scale: f64,
    pub density: f64,
    pub leak: f64,
    pub activation: Activation,
}

impl Default for ReservoirSection {
    fn default() -> Self {
        Self {
            neurons: 200,
            spectral_radius: 0.9,
            input_scale: 0.1,
            density: 0.05,
            leak: 1.0,
            activation: Activation::Tanh,
        }
    }
}

/// How lag counts are assigned to neurons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayPolicy {
    /// The same lag count for every neuron.
    Uniform { n_lag: usize },
    /// One lag count per neuron.
    Explicit { lags: Vec<usize> },
    /// Per-neuron counts drawn from a truncated discrete Gaussian; the draw
    /// is recorded in the run manifest.
    Random(LagDistribution),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutSection {
    pub beta: f64,
    pub washout: usize,
    /// z-score inputs with statistics of the training segment.
    pub normalize: bool,
    /// Append a constant feature.
    pub bias: bool,
    /// Lag stride τ in steps.
    pub stride: usize,
    pub delays: DelayPolicy,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        Self {
            beta: 1e-6,
            washout: 500,
            normalize: true,
            bias: false,
            stride: 1,
            delays: DelayPolicy::Uniform { n_lag: 1 },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Leading steps of the trajectory used for training.
    pub n_train: usize,
    /// Read the trajectory from this CSV instead of generating it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    /// Lyapunov time in time units; estimated from the system when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_time: Option<f64>,
    /// Steps integrated by the Lyapunov estimate.
    pub lyapunov_steps: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            n_train: 6000,
            trajectory: None,
            lyapunov_time: None,
            lyapunov_steps: 50_000,
        }
    }
}

/// The trajectory after the training block is split into the teacher-forced
/// warmup, the continuation the autonomous run is compared with, and an
/// independent reference sample for the climate test.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub warmup: usize,
    pub horizon: usize,
    /// Steps of reference truth; `0` compares against the continuation.
    pub reference: usize,
    pub vpt_threshold: f64,
    pub climate: ClimateOptions,
}

impl Default for PredictSection {
    fn default() -> Self {
        Self {
            warmup: 1000,
            horizon: 2000,
            reference: 0,
            vpt_threshold: DEFAULT_VPT_THRESHOLD,
            climate: ClimateOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rung {
    pub neurons: usize,
    pub n_lag: usize,
    /// Overrides `reservoir.density` for this rung.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub ladder: Vec<Rung>,
    pub stride: usize,
    pub k_max: usize,
    pub beta: f64,
    pub amplitude: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub washout: usize,
    pub repeats: usize,
}

impl Default for McSection {
    fn default() -> Self {
        let rung = |neurons, n_lag, density| Rung {
            neurons,
            n_lag,
            density,
        };
        Self {
            ladder: vec![rung(60, 1, None), rung(6, 10, Some(1.0)), rung(1, 60, Some(1.0))],
            stride: 1,
            k_max: 100,
            beta: 1e-8,
            amplitude: 0.5,
            n_train: 4000,
            n_test: 1000,
            washout: 500,
            repeats: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub neurons: Vec<usize>,
    pub lags: Vec<usize>,
    pub repeats: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            neurons: vec![20, 40, 100, 200],
            lags: vec![1, 2, 5],
            repeats: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmiSource {
    /// The training trajectory itself.
    Series,
    /// Reservoir neuron traces driven by the training trajectory.
    Neurons,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmiSection {
    pub tau_max: usize,
    pub bins: usize,
    pub source: DmiSource,
}

impl Default for DmiSection {
    fn default() -> Self {
        Self {
            tau_max: 50,
            bins: 16,
            source: DmiSource::Series,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimtestSection {
    pub d_list: Vec<usize>,
    pub policy: DimensionPolicy,
    pub repeats: usize,
    pub train_fraction: f64,
}

impl Default for DimtestSection {
    fn default() -> Self {
        Self {
            d_list: vec![25, 50, 100, 200],
            policy: DimensionPolicy::Neurons,
            repeats: 3,
            train_fraction: 0.8,
        }
    }
}

impl ExperimentConfig {
    /// Resolves a config document: applies its `base` preset, selects its
    /// `variant`, applies `seed` when given and expands every default.
    pub fn from_toml_str(text: &str, seed: Option<u64>) -> Result<Self> {
        let table: Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(table, seed)
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::from_toml_str(preset_source(name)?, None)
    }

    pub fn from_table(table: Table, seed: Option<u64>) -> Result<Self> {
        let mut table = expand_bases(table, 0)?;
        if let Some(s) = seed {
            table.insert("seed".into(), Value::Integer(seed_to_toml(s)?));
        }
        // a resolved config keeps its `variant` label but no `variants`
        // table; the overlay has already been applied then
        let variants = match table.remove("variants") {
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(Error::Config("`variants` must be a table of tables".into())),
            None => None,
        };
        if let (Some(v), Some(variants)) = (table.get("variant"), variants) {
            let name = v
                .as_str()
                .ok_or_else(|| Error::Config("`variant` must be a string".into()))?
                .to_string();
            let overlay = match variants.get(&name) {
                Some(Value::Table(t)) => t.clone(),
                _ => {
                    let known: Vec<&String> = variants.keys().collect();
                    return Err(Error::Config(format!(
                        "unknown variant `{name}`; this config defines {known:?}"
                    )));
                }
            };
            merge(&mut table, overlay);
        }
        let seed = match table.get("seed") {
            Some(Value::Integer(s)) if *s >= 0 => *s as u64,
            Some(_) => return Err(Error::Config("`seed` must be a non-negative integer".into())),
            None => {
                return Err(Error::Config(
                    "config has no `seed`; every run needs an explicit seed".into(),
                ))
            }
        };
        let system = resolve_system(table.remove("system"), seed)?;
        table.insert("system".into(), system);
        for section in [
            "reservoir",
            "readout",
            "data",
            "predict",
            "mc",
            "sweep",
            "dmi",
            "dimtest",
        ] {
            table.entry(section).or_insert_with(|| Value::Table(Table::new()));
        }
        let cfg: Self = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config file. A path that does not exist but names an
    /// embedded preset loads that preset.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        if !path.exists() {
            if let Some(name) = path.to_str().filter(|n| preset_names().contains(n)) {
                return Self::from_toml_str(preset_source(name)?, seed);
            }
            return Err(Error::MissingArtifact {
                path: path.into(),
                hint: format!(
                    "config file not found (embedded presets: {})",
                    preset_names().join(", ")
                ),
            });
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, seed)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(&self.name))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return fail(format!("`name` must be a plain non-empty label, got `{}`", self.name));
        }
        if self.readout.stride == 0 {
            return fail("readout.stride must be at least 1".into());
        }
        if !(self.readout.beta >= 0.0) {
            return fail(format!("readout.beta must be non-negative, got {}", self.readout.beta));
        }
        if let DelayPolicy::Explicit { lags } = &self.readout.delays {
            if lags.len() != self.reservoir.neurons {
                return fail(format!(
                    "readout.delays lists {} lag counts but reservoir.neurons is {}",
                    lags.len(),
                    self.reservoir.neurons
                ));
            }
        }
        if self.data.n_train < 2 {
            return fail("data.n_train must be at least 2".into());
        }
        if self.mc.ladder.is_empty() || self.mc.repeats == 0 {
            return fail("mc needs a non-empty ladder and at least one repeat".into());
        }
        if !(self.dimtest.train_fraction > 0.0 && self.dimtest.train_fraction < 1.0) {
            return fail(format!(
                "dimtest.train_fraction must lie in (0, 1), got {}",
                self.dimtest.train_fraction
            ));
        }
        Ok(())
    }
}

fn seed_to_toml(seed: u64) -> Result<i64> {
    i64::try_from(seed).map_err(|_| Error::Config(format!("seed {seed} exceeds the TOML integer range")))
}

/// Replaces `base = "<preset>"` chains by the merged preset contents.
fn expand_bases(mut table: Table, depth: usize) -> Result<Table> {
    let Some(base) = table.remove("base") else {
        return Ok(table);
    };
    if depth > 8 {
        return Err(Error::Config("`base` chain is too deep".into()));
    }
    let name = base
        .as_str()
        .ok_or_else(|| Error::Config("`base` must name a preset".into()))?;
    let parent: Table = toml::from_str(preset_source(name)?).map_err(|e| Error::Config(e.to_string()))?;
    let mut merged = expand_bases(parent, depth + 1)?;
    merge(&mut merged, table);
    Ok(merged)
}

/// Overlays `top` on `base`. Nested tables merge key by key unless they
/// switch to a different tagged variant, in which case the override wins whole.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) if !switches_variant(b, &t) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn switches_variant(base: &Table, top: &Table) -> bool {
    ["kind", "preset"]
        .iter()
        .any(|tag| matches!((base.get(*tag), top.get(*tag)), (Some(a), Some(b)) if a != b))
}

fn resolve_system(raw: Option<Value>, seed: u64) -> Result<Value> {
    let mut raw = match raw {
        Some(Value::Table(t)) => t,
        Some(_) => return Err(Error::Config("`system` must be a table".into())),
        None => return Err(Error::Config("config has no [system] table".into())),
    };
    let name = match raw.remove("preset") {
        Some(Value::String(s)) => s,
        _ => {
            return Err(Error::Config(
                "[system] needs `preset` naming one of lorenz, gene, lattice".into(),
            ))
        }
    };
    let defaults = SystemConfig::preset(&name, seed)?;
    let mut table = match Value::try_from(&defaults).map_err(|e| Error::Config(e.to_string()))? {
        Value::Table(t) => t,
        _ => unreachable!("system presets serialize to tables"),
    };
    for key in raw.keys() {
        if !table.contains_key(key) {
            let known: Vec<&String> = table.keys().filter(|k| *k != "preset").collect();
            return Err(Error::Config(format!(
                "unknown [system] key `{key}` for `{name}`; known keys {known:?}"
            )));
        }
    }
    merge(&mut table, raw);
    Ok(Value::Table(table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_resolves() {
        for name in preset_names() {
            let cfg = ExperimentConfig::preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!cfg.name.is_empty());
        }
    }

    #[test]
    fn resolved_config_round_trips_through_toml() {
        for name in preset_names() {
            let cfg = ExperimentConfig::preset(name).unwrap();
            let text = cfg.to_toml_string().unwrap();
            let again = ExperimentConfig::from_toml_str(&text, None).unwrap();
            assert_eq!(text, again.to_toml_string().unwrap(), "{name}");
        }
    }

    #[test]
    fn overrides_and_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "name = \"t\"\nseed = 3\n[system]\npreset = \"lorenz\"\nn_steps = 123\n[reservoir]\nneurons = 7\n",
            None,
        )
        .unwrap();
        assert_eq!(cfg.system.n_steps(), 123);
        assert_eq!(cfg.reservoir.neurons, 7);
        assert_eq!(cfg.reservoir.spectral_radius, 0.9);
        assert_eq!(cfg.readout.delays, DelayPolicy::Uniform { n_lag: 1 });
        match cfg.system {
            SystemConfig::Lorenz(p) => assert_eq!(p.rho, 28.0),
            _ => panic!("wrong system"),
        }
    }

    #[test]
    fn base_and_variant_layering() {
        let cfg = ExperimentConfig::from_toml_str("base = \"fig2a\"\nvariant = \"rc40x5\"\nseed = 9\n", None).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.reservoir.neurons, 40);
        assert_eq!(cfg.readout.delays, DelayPolicy::Uniform { n_lag: 5 });
        let seeded = ExperimentConfig::from_toml_str("base = \"fig2a\"\n", Some(4)).unwrap();
        assert_eq!(seeded.seed, 4);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap(), None).unwrap();
        assert_eq!(again.variant.as_deref(), Some("rc40x5"));
        assert_eq!(again.reservoir.neurons, 40);
        let err = ExperimentConfig::from_toml_str("base = \"fig2a\"\nvariant = \"rc41\"\n", None).unwrap_err();
        assert!(err.to_string().contains("rc40rand"), "{err}");
    }

    #[test]
    fn unknown_names_are_reported() {
        let err = ExperimentConfig::from_toml_str("base = \"nope\"\n", None).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("nope") && msg.contains("fig2a") && msg.contains("lattice"),
            "{msg}"
        );
        let err =
            ExperimentConfig::from_toml_str("name=\"a\"\nseed=1\n[system]\npreset=\"rossler\"\n", None).unwrap_err();
        assert!(matches!(err, Error::UnknownPreset { .. }));
        let err =
            ExperimentConfig::from_toml_str("name=\"a\"\nseed=1\n[system]\npreset=\"lorenz\"\nsigmaa=1.0\n", None)
                .unwrap_err();
        assert!(err.to_string().contains("sigmaa"));
        let err = ExperimentConfig::from_toml_str(
            "name=\"a\"\nseed=1\n[system]\npreset=\"lorenz\"\n[reservoir]\nneuron=3\n",
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("neuron"), "{err}");
    }

    #[test]
    fn seed_is_mandatory() {
        let err = ExperimentConfig::from_toml_str("name=\"a\"\n[system]\npreset=\"gene\"\n", None).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn switching_tagged_variant_replaces_the_table() {
        let cfg = ExperimentConfig::from_toml_str(
            "base = \"lorenz\"\n[readout.delays]\nkind = \"explicit\"\nlags = [2, 3]\n[reservoir]\nneurons = 2\n",
            None,
        )
        .unwrap();
        assert_eq!(cfg.readout.delays, DelayPolicy::Explicit { lags: vec![2, 3] });
    }
}
