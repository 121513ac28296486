//! Config-driven experiments behind the `delay-rc` command line.
//!
//! A run resolves an [`ExperimentConfig`], executes one [`Command`] into an
//! output directory and records a [`RunManifest`] listing the resolved
//! config, every seed, every derived value and a digest of each output file.
//! Passing that manifest back as the config replays the run.

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::json;

pub use config::{
    preset_names, preset_source, DataSection, DelayPolicy, DimtestSection, DmiSection, DmiSource, ExperimentConfig,
    McSection, PredictSection, ReadoutSection, ReservoirSection, Rung, SweepSection, SystemConfig, PRESETS,
    SYSTEM_PRESETS,
};
pub use manifest::{sha256_hex, FileRecord, RunManifest, MANIFEST_FORMAT};

use crate::analysis::{
    climate_test, delayed_mutual_information, dimension_test, lag_budget_check, median, memory_capacity, mse,
    neuron_dmi, parallel_map, tradeoff_grid, valid_prediction_time, ClimateReport, DimensionSpec, LagBudget, MCResult,
    MemoryOptions, SweepSpec,
};
use crate::dynamics::LyapunovOptions;
use crate::error::{Error, Result};
use crate::readout::{
    drive_normalized, one_step_predictions, predict_closed_loop, train_readout, DelaySpec, ReadoutModel, TrainOptions,
};
use crate::reservoir::{Reservoir, ReservoirConfig};
use crate::rng::{child_stream, derive_seed};
use crate::series::{Normalization, TimeSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Generate,
    Train,
    Predict,
    Mc,
    Sweep,
    Dmi,
    Dimtest,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Generate,
        Command::Train,
        Command::Predict,
        Command::Mc,
        Command::Sweep,
        Command::Dmi,
        Command::Dimtest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Predict => "predict",
            Command::Mc => "mc",
            Command::Sweep => "sweep",
            Command::Dmi => "dmi",
            Command::Dimtest => "dimtest",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command `{s}`")))
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses one per core. Results never depend on it.
    pub jobs: usize,
    /// Overrides the config's output directory.
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: PathBuf,
    pub files: Vec<PathBuf>,
    /// One-line results for the terminal.
    pub lines: Vec<String>,
    pub warnings: Vec<String>,
}

/// Loads a TOML config, a run manifest (`*.json`, for replay) or the name of
/// an embedded preset.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    if path.extension().is_some_and(|e| e == "json") && path.exists() {
        let cfg = RunManifest::load(path)?.config;
        return match seed {
            None => Ok(cfg),
            Some(s) => {
                let table = toml::Table::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
                ExperimentConfig::from_table(table, Some(s))
            }
        };
    }
    ExperimentConfig::load(path, seed)
}

pub fn run(command: Command, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    let out_dir = opts.out.clone().unwrap_or_else(|| cfg.out_dir());
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut ctx = Context {
        cfg,
        jobs: opts.jobs,
        dir: out_dir,
        seeds: BTreeMap::from([("master".to_string(), cfg.seed)]),
        derived: BTreeMap::new(),
        files: Vec::new(),
        lines: Vec::new(),
        warnings: Vec::new(),
    };
    match command {
        Command::Generate => cmd_generate(&mut ctx)?,
        Command::Train => cmd_train(&mut ctx)?,
        Command::Predict => cmd_predict(&mut ctx)?,
        Command::Mc => cmd_mc(&mut ctx)?,
        Command::Sweep => cmd_sweep(&mut ctx)?,
        Command::Dmi => cmd_dmi(&mut ctx)?,
        Command::Dimtest => cmd_dimtest(&mut ctx)?,
    }
    let mut config = cfg.clone();
    config.out = None;
    let records = ctx
        .files
        .iter()
        .map(|f| FileRecord::of(&ctx.dir, f))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        config,
        seeds: ctx.seeds,
        derived: ctx.derived,
        files: records,
    };
    let path = manifest.save(&ctx.dir)?;
    Ok(RunSummary {
        files: ctx.files.iter().map(|f| ctx.dir.join(f)).collect(),
        out_dir: ctx.dir,
        manifest: path,
        lines: ctx.lines,
        warnings: ctx.warnings,
    })
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    jobs: usize,
    dir: PathBuf,
    seeds: BTreeMap<String, u64>,
    derived: BTreeMap<String, serde_json::Value>,
    files: Vec<String>,
    lines: Vec<String>,
    warnings: Vec<String>,
}

impl Context<'_> {
    fn seed(&mut self, label: &str) -> u64 {
        let s = derive_seed(self.cfg.seed, label, &[]);
        self.seeds.insert(label.into(), s);
        s
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.into());
        Ok(())
    }

    fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, text.as_bytes())
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    /// The configured trajectory: read from `data.trajectory` or generated.
    fn trajectory(&self) -> Result<TimeSeries<f64>> {
        match &self.cfg.data.trajectory {
            Some(p) => TimeSeries::load_csv(p, self.cfg.system.dt()),
            None => self.cfg.system.spec().generate(),
        }
    }

    fn training_slice(&self, series: &TimeSeries<f64>) -> Result<TimeSeries<f64>> {
        let n = self.cfg.data.n_train;
        if series.n_steps() < n {
            return Err(Error::InsufficientData(format!(
                "trajectory has {} steps, data.n_train is {n}",
                series.n_steps()
            )));
        }
        series.slice(0, n)
    }

    /// Configured or estimated Lyapunov time; `None` for a non-chaotic system.
    fn lyapunov_time(&mut self) -> Result<Option<f64>> {
        if let Some(lt) = self.cfg.data.lyapunov_time {
            return Ok(Some(lt));
        }
        let opts = LyapunovOptions {
            seed: self.seed("lyapunov"),
            ..LyapunovOptions::default()
        };
        let horizon = self.cfg.data.lyapunov_steps as f64 * self.cfg.system.dt();
        let est = self.cfg.system.spec().lyapunov(horizon, &opts)?;
        self.derived.insert("lyapunov_exponent".into(), json!(est.exponent));
        self.derived.insert("lyapunov_time".into(), json!(est.lyapunov_time));
        if est.lyapunov_time.is_none() {
            self.warnings.push(format!(
                "estimated largest Lyapunov exponent {:.3e} is not positive; times are reported in time units",
                est.exponent
            ));
        }
        Ok(est.lyapunov_time)
    }

    fn reservoir_config(&self, neurons: usize, inputs: usize, seed: u64) -> ReservoirConfig<f64> {
        let r = &self.cfg.reservoir;
        ReservoirConfig {
            neurons,
            inputs,
            spectral_radius: r.spectral_radius,
            input_scale: r.input_scale,
            density: r.density,
            leak: r.leak,
            activation: r.activation,
            seed,
        }
    }

    fn train_options(&self) -> TrainOptions<f64> {
        let r = &self.cfg.readout;
        TrainOptions {
            beta: r.beta,
            washout: r.washout,
            normalize: r.normalize,
            bias: r.bias,
        }
    }

    fn delay_spec(&mut self) -> Result<DelaySpec> {
        let m = self.cfg.reservoir.neurons;
        let stride = self.cfg.readout.stride;
        match &self.cfg.readout.delays {
            DelayPolicy::Uniform { n_lag } => DelaySpec::uniform(m, *n_lag, stride),
            DelayPolicy::Explicit { lags } => DelaySpec::new(stride, lags.clone()),
            DelayPolicy::Random(dist) => {
                let mut rng = child_stream(self.seed("random-lags"), "lags", &[]);
                let spec = DelaySpec::random(m, stride, dist, &mut rng)?;
                self.derived.insert("lags".into(), json!(spec.lags));
                Ok(spec)
            }
        }
    }
}

#[derive(Serialize)]
struct TrajectoryInfo<'a> {
    system: &'a str,
    dt: f64,
    n_steps: usize,
    var_names: &'a [String],
}

fn cmd_generate(ctx: &mut Context) -> Result<()> {
    let series = ctx.trajectory()?;
    ctx.write_with("trajectory.csv", |b| series.write_csv(b))?;
    let info = TrajectoryInfo {
        system: ctx.cfg.system.name(),
        dt: series.dt(),
        n_steps: series.n_steps(),
        var_names: series.var_names(),
    };
    ctx.write_json("trajectory.json", &info)?;
    ctx.lines.push(format!(
        "generated {} steps of {} ({} variables, dt = {})",
        info.n_steps,
        info.system,
        series.n_vars(),
        info.dt
    ));
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    training_mse: f64,
    used_fallback: bool,
    condition_estimate: f64,
    samples: usize,
    neurons: usize,
    effective_dimension: usize,
    lag_budget: Option<LagBudget>,
}

fn cmd_train(ctx: &mut Context) -> Result<()> {
    let series = ctx.trajectory()?;
    let train = ctx.training_slice(&series)?;
    let seed = ctx.seed("reservoir");
    let res = Reservoir::build(&ctx.reservoir_config(ctx.cfg.reservoir.neurons, train.n_vars(), seed))?;
    let spec = ctx.delay_spec()?;
    let trained = train_readout(&res, &train, &spec, &ctx.train_options())?;
    let max_lag = spec.lags.iter().copied().max().unwrap_or(1);
    let lag_budget = match ctx.lyapunov_time()? {
        Some(lt) if max_lag > 1 => Some(lag_budget_check(spec.stride, ctx.cfg.system.dt(), max_lag, lt)?),
        _ => None,
    };
    if let Some(b) = lag_budget.filter(|b| !b.passed) {
        ctx.warnings.push(format!(
            "lag window spans {:.4} time units, {:.2} Lyapunov times; delays older than one Lyapunov time carry little information",
            b.span, b.margin
        ));
    }
    res.save(&ctx.path("reservoir.json"), false)?;
    ctx.files.push("reservoir.json".into());
    trained.model.save(&ctx.path("readout.json"))?;
    ctx.files.push("readout.json".into());
    let report = TrainReport {
        training_mse: trained.training_mse,
        used_fallback: trained.used_fallback,
        condition_estimate: trained.condition_estimate,
        samples: trained.samples,
        neurons: res.neurons(),
        effective_dimension: spec.effective_dimension(),
        lag_budget,
    };
    ctx.write_json("train_report.json", &report)?;
    ctx.lines.push(format!(
        "trained readout: {} neurons, d = {}, training MSE {:.4e}{}",
        report.neurons,
        report.effective_dimension,
        report.training_mse,
        if report.used_fallback { " (SVD fallback)" } else { "" }
    ));
    Ok(())
}

#[derive(Serialize)]
struct PredictReport {
    horizon: usize,
    lyapunov_time: Option<f64>,
    /// In Lyapunov times, or time units when the Lyapunov time is unknown.
    valid_prediction_time: f64,
    vpt_units: &'static str,
    closed_loop_mse: f64,
    open_loop_mse: f64,
    reference_steps: usize,
    climate: ClimateReport,
}

fn load_artifact<F, V>(ctx: &Context, name: &str, load: F) -> Result<V>
where
    F: FnOnce(&Path) -> Result<V>,
{
    let path = ctx.path(name);
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path,
            hint: "run `delay-rc train` with the same config and output directory first".into(),
        });
    }
    load(&path)
}

fn cmd_predict(ctx: &mut Context) -> Result<()> {
    let res: Reservoir<f64> = load_artifact(ctx, "reservoir.json", Reservoir::load)?;
    let model: ReadoutModel<f64> = load_artifact(ctx, "readout.json", ReadoutModel::load)?;
    let p = &ctx.cfg.predict;
    let (n_train, warm, horizon) = (ctx.cfg.data.n_train, p.warmup, p.horizon);
    let series = ctx.trajectory()?;
    let need = n_train + warm + horizon + p.reference;
    if series.n_steps() < need {
        return Err(Error::InsufficientData(format!(
            "prediction needs {need} trajectory steps (train {n_train} + warmup {warm} + horizon {horizon} + reference {}), trajectory has {}",
            p.reference,
            series.n_steps()
        )));
    }
    let start = n_train + warm;
    let warmup = series.slice(n_train, start)?;
    let truth = series.slice(start, start + horizon)?;
    let reference = if p.reference == 0 {
        truth.clone()
    } else {
        series.slice(start + horizon, need)?
    };
    let pred = predict_closed_loop(&res, &model, &warmup, horizon)?;
    let climate = climate_test(&pred, &reference, &p.climate)?;
    let lt = ctx.lyapunov_time()?;
    let vpt = valid_prediction_time(&pred, &truth, p.vpt_threshold, lt.unwrap_or(1.0))?;
    let (open_pred, open_truth) = one_step_predictions(&res, &model, &series.slice(n_train, start + horizon)?)?;
    let report = PredictReport {
        horizon,
        lyapunov_time: lt,
        valid_prediction_time: vpt,
        vpt_units: if lt.is_some() { "lyapunov_times" } else { "time_units" },
        closed_loop_mse: mse(&pred, &truth)?,
        open_loop_mse: mse(&open_pred, &open_truth)?,
        reference_steps: reference.n_steps(),
        climate,
    };
    ctx.write_with("prediction.csv", |b| pred.write_csv(b))?;
    ctx.write_json("predict_report.json", &report)?;
    ctx.lines.push(format!(
        "valid prediction time {:.3} {}; climate {} (max TV {:.3}, bounded {}); open-loop MSE {:.4e}",
        report.valid_prediction_time,
        report.vpt_units.replace('_', " "),
        if report.climate.passed { "pass" } else { "fail" },
        report.climate.max_tv(),
        report.climate.bounded,
        report.open_loop_mse
    ));
    Ok(())
}

fn cmd_mc(ctx: &mut Context) -> Result<()> {
    let mc = &ctx.cfg.mc;
    let mut tasks = Vec::new();
    for i in 0..mc.ladder.len() {
        for r in 0..mc.repeats {
            tasks.push((i, r));
        }
    }
    let results = parallel_map(ctx.jobs, &tasks, |&(i, r)| -> Result<MCResult<f64>> {
        let rung = &mc.ladder[i];
        let mut cfg = ctx.reservoir_config(
            rung.neurons,
            1,
            derive_seed(ctx.cfg.seed, "mc-reservoir", &[i as u64, r as u64]),
        );
        if let Some(d) = rung.density {
            cfg.density = d;
        }
        let res = Reservoir::build(&cfg)?;
        let spec = DelaySpec::uniform(rung.neurons, rung.n_lag, mc.stride)?;
        let opts = MemoryOptions {
            k_max: mc.k_max,
            beta: mc.beta,
            seed: derive_seed(ctx.cfg.seed, "mc-input", &[r as u64]),
            amplitude: mc.amplitude,
            n_train: mc.n_train,
            n_test: mc.n_test,
            washout: mc.washout,
        };
        memory_capacity(&res, &spec, &opts)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    ctx.write_with("mc.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["rung", "neurons", "n_lag", "repeat", "seed", "k", "mc_k"])?;
        for (&(i, r), res) in tasks.iter().zip(&results) {
            for (k, v) in res.mc_k.iter().enumerate() {
                w.write_record([
                    i.to_string(),
                    res.neurons.to_string(),
                    mc.ladder[i].n_lag.to_string(),
                    r.to_string(),
                    res.seed.to_string(),
                    (k + 1).to_string(),
                    format!("{v:e}"),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("mc.csv", e))
    })?;
    let mut summary = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut summary);
        w.write_record([
            "rung",
            "neurons",
            "n_lag",
            "effective_dimension",
            "median_mc",
            "fading",
            "repeats",
        ])?;
        for (i, rung) in mc.ladder.iter().enumerate() {
            let cell = &results[i * mc.repeats..(i + 1) * mc.repeats];
            let med = median(cell.iter().map(|c| c.total).collect()).unwrap_or(f64::NAN);
            let fading = cell.iter().filter(|c| c.is_fading()).count();
            w.write_record([
                i.to_string(),
                rung.neurons.to_string(),
                rung.n_lag.to_string(),
                (rung.neurons * rung.n_lag).to_string(),
                format!("{med:e}"),
                fading.to_string(),
                mc.repeats.to_string(),
            ])?;
            ctx.lines.push(format!(
                "{:>4} neurons x {:>3} lags: median MC {:.3} ({fading}/{} curves fading)",
                rung.neurons, rung.n_lag, med, mc.repeats
            ));
        }
        w.flush().map_err(|e| Error::io("mc_summary.csv", e))?;
    }
    ctx.write("mc_summary.csv", &summary)
}

fn cmd_sweep(ctx: &mut Context) -> Result<()> {
    let series = ctx.trajectory()?;
    let train = ctx.training_slice(&series)?;
    let spec = SweepSpec {
        template: ctx.reservoir_config(1, train.n_vars(), 0),
        neurons: ctx.cfg.sweep.neurons.clone(),
        lags: ctx.cfg.sweep.lags.clone(),
        tau: ctx.cfg.readout.stride,
        train: ctx.train_options(),
        repeats: ctx.cfg.sweep.repeats,
        seed: ctx.seed("sweep"),
    };
    let grid = tradeoff_grid(&train, &spec, ctx.jobs)?;
    ctx.write_with("sweep.csv", |b| grid.write_csv(b))?;
    let mut summary = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut summary);
        w.write_record(["neurons", "n_lag", "median_training_mse", "failures"])?;
        for (i, n) in grid.neurons.iter().enumerate() {
            let mut row = format!("{n:>5} neurons:");
            for (j, l) in grid.lags.iter().enumerate() {
                let med = grid.median(i, j);
                let failed = grid.cell(i, j).iter().filter(|c| c.outcome.mse().is_none()).count();
                w.write_record([
                    n.to_string(),
                    l.to_string(),
                    med.map(|v| format!("{v:e}")).unwrap_or_default(),
                    failed.to_string(),
                ])?;
                row += &match med {
                    Some(v) => format!("  lag {l}: {v:.3e}"),
                    None => format!("  lag {l}: failed"),
                };
            }
            ctx.lines.push(row);
        }
        w.flush().map_err(|e| Error::io("sweep_summary.csv", e))?;
    }
    if grid.failures() > 0 {
        ctx.warnings
            .push(format!("{} sweep cells failed; see sweep.csv", grid.failures()));
    }
    ctx.write("sweep_summary.csv", &summary)
}

fn cmd_dmi(ctx: &mut Context) -> Result<()> {
    let series = ctx.trajectory()?;
    let train = ctx.training_slice(&series)?;
    let d = &ctx.cfg.dmi;
    let curve = match d.source {
        DmiSource::Series => delayed_mutual_information(&train, d.tau_max, d.bins)?,
        DmiSource::Neurons => {
            let seed = ctx.seed("reservoir");
            let res = Reservoir::build(&ctx.reservoir_config(ctx.cfg.reservoir.neurons, train.n_vars(), seed))?;
            let norm = if ctx.cfg.readout.normalize {
                Normalization::fit(&train)
            } else {
                Normalization::identity(train.n_vars())
            };
            let (_, states) = drive_normalized(&res, &norm, &train, ctx.cfg.readout.washout)?;
            neuron_dmi(&states, d.tau_max, d.bins)?
        }
    };
    ctx.write_with("dmi.csv", |b| curve.write_csv(b))?;
    ctx.derived
        .insert("recommended_tau".into(), json!(curve.recommended_tau));
    ctx.lines.push(match curve.recommended_tau {
        Some(t) => format!("recommended lag stride: {t} steps"),
        None => format!("no DMI minimum within {} lags", d.tau_max),
    });
    Ok(())
}

fn cmd_dimtest(ctx: &mut Context) -> Result<()> {
    let series = ctx.trajectory()?;
    let train = ctx.training_slice(&series)?;
    let t = &ctx.cfg.dimtest;
    let spec = DimensionSpec {
        template: ctx.reservoir_config(1, train.n_vars(), 0),
        d_list: t.d_list.clone(),
        policy: t.policy.clone(),
        beta: ctx.cfg.readout.beta,
        washout: ctx.cfg.readout.washout,
        repeats: t.repeats,
        seed: ctx.seed("dimtest"),
        train_fraction: t.train_fraction,
    };
    let report = dimension_test(&train, &spec, ctx.jobs)?;
    ctx.write_with("dimtest.csv", |b| report.write_csv(b))?;
    ctx.write_json("dimtest_report.json", &report)?;
    ctx.lines
        .push(format!("recommended effective dimension: {}", report.recommended));
    Ok(())
}
