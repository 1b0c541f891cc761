//! The experiment pipelines behind each subcommand.
//!
//! Every pipeline writes its artifacts below the output directory
//! (`csv/`, `datasets/`, `models/`) and a manifest under `runs/<id>/`
//! recording configs, seeds and artifact checksums. All randomness is
//! derived from the master seed, so a rerun with the same seed produces
//! byte-identical artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use nalgebra::DVector;
use serde_json::{json, Value};

use tobs::burgers::{make_system, sample_fourier_initial, BurgersSystem, SensorLayout};
use tobs::dynamics::{observe_trajectory, propagate, OutputSequence, SystemModel, Trajectory};
use tobs::error::Error;
use tobs::filter::{build_dataset, evaluate_rmse, flatten_window, train, Dataset, Mlp, Role};
use tobs::io::{
    self, atomic_write, fmt_f64, load_dataset, load_model, save_dataset, save_model,
    save_outputs_csv, save_survey_csv, save_trajectory_csv, ExperimentManifest,
};
use tobs::observability::{
    delta_robustness_check, empirical_pair, gramian_survey, unobservability_index,
    worst_case_error_bound, Survey,
};
use tobs::rng::{derive_seed, streams};
use tobs::ukf::{error_series, ukf_run, InitOffset};

use crate::experiment::Setup;

pub struct RunSummary {
    pub run_id: String,
    pub artifacts: Vec<String>,
    pub results: BTreeMap<String, Value>,
}

/// Accumulates artifacts and results for one run, then writes the manifest.
struct Run<'a> {
    out: &'a Path,
    id: String,
    manifest: ExperimentManifest,
    results: BTreeMap<String, Value>,
}

impl<'a> Run<'a> {
    fn new(out: &'a Path, command: &str, seed: u64, setup: &Setup) -> Self {
        let mut manifest = ExperimentManifest::new(
            command,
            seed,
            setup.burgers.clone(),
            setup.sensors.clone(),
        );
        manifest.gramian = Some(setup.gramian.clone());
        manifest.ukf = Some(setup.ukf.clone());
        manifest.datagen = Some(setup.datagen.clone());
        manifest.train = Some(setup.train.clone());
        Self {
            out,
            id: format!("{command}-seed{seed}"),
            manifest,
            results: BTreeMap::new(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Record a file that was just written below the output directory.
    fn record(&mut self, name: &str, rel: &str) -> anyhow::Result<()> {
        self.manifest
            .record_artifact_file(name, self.out, rel)
            .with_context(|| format!("recording artifact {rel}"))?;
        Ok(())
    }

    fn write_csv(&mut self, name: &str, rel: &str, header: &str, rows: &[String]) -> anyhow::Result<()> {
        let mut text = String::from(header);
        text.push('\n');
        for row in rows {
            text.push_str(row);
            text.push('\n');
        }
        atomic_write(&self.path(rel), text.as_bytes())?;
        self.record(name, rel)
    }

    fn result_f64(&mut self, key: &str, value: f64) {
        self.results.insert(key.to_string(), json!(value));
        self.manifest.results.insert(key.to_string(), value);
    }

    fn result(&mut self, key: &str, value: Value) {
        self.results.insert(key.to_string(), value);
    }

    fn finish(self) -> anyhow::Result<RunSummary> {
        let manifest_rel = format!("runs/{}/manifest.json", self.id);
        self.manifest.save(&self.out.join(&manifest_rel))?;
        let mut artifacts: Vec<String> =
            self.manifest.artifacts.iter().map(|a| a.path.clone()).collect();
        artifacts.push(manifest_rel);
        Ok(RunSummary {
            run_id: self.id,
            artifacts,
            results: self.results,
        })
    }
}

fn system_for(setup: &Setup) -> anyhow::Result<BurgersSystem> {
    Ok(make_system(setup.burgers.clone(), setup.sensors.clone())?)
}

fn fourier_state(setup: &Setup, seed: u64) -> anyhow::Result<DVector<f64>> {
    Ok(sample_fourier_initial(
        &setup.burgers,
        setup.datagen.fourier_modes,
        setup.datagen.fourier_sigma,
        seed,
    )?)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn simulate(
    setup: &Setup,
    seed: u64,
    out: &Path,
    zero_init: bool,
    steps: Option<usize>,
    noise_sd: f64,
) -> anyhow::Result<RunSummary> {
    let system = system_for(setup)?;
    let steps = steps.unwrap_or(setup.burgers.time_steps);
    let x0 = if zero_init {
        DVector::zeros(system.state_dim())
    } else {
        fourier_state(setup, derive_seed(seed, streams::TRAJECTORY, 0))?
    };
    let traj = propagate(&system, &x0, steps)?;
    let outputs = observe_trajectory(&system, &traj, noise_sd, derive_seed(seed, streams::NOISE, 0))?;

    let mut run = Run::new(out, "simulate", seed, setup);
    save_trajectory_csv(&run.path("csv/trajectory.csv"), &traj)?;
    run.record("state trajectory", "csv/trajectory.csv")?;
    save_outputs_csv(&run.path("csv/outputs.csv"), &outputs)?;
    run.record("output sequence", "csv/outputs.csv")?;

    run.result_f64("initial_energy", traj.state(0).norm_squared());
    run.result_f64("final_energy", traj.last().norm_squared());
    run.result("steps", json!(steps));
    run.finish()
}

// ---------------------------------------------------------------------------
// observability survey
// ---------------------------------------------------------------------------

fn survey_stats(run: &mut Run<'_>, survey: &Survey) {
    if let Some(mean) = survey.mean_finite_index() {
        run.result_f64("index_mean", mean);
    }
    if let Some(median) = survey.median_index() {
        run.result_f64("index_median", median);
    }
    if !survey.samples.is_empty() {
        let min_eig_min = survey.samples.iter().map(|s| s.min_eig).fold(f64::INFINITY, f64::min);
        let min_eig_max = survey
            .samples
            .iter()
            .map(|s| s.min_eig)
            .fold(f64::NEG_INFINITY, f64::max);
        run.result_f64("min_eig_min", min_eig_min);
        run.result_f64("min_eig_max", min_eig_max);
    }
    run.result("samples_ok", json!(survey.samples.len()));
    run.result("samples_failed", json!(survey.failures.len()));
}

pub fn observability(
    setup: &Setup,
    seed: u64,
    out: &Path,
    samples: usize,
) -> anyhow::Result<RunSummary> {
    let system = system_for(setup)?;
    let survey = gramian_survey(
        &system,
        |s| {
            sample_fourier_initial(
                &setup.burgers,
                setup.datagen.fourier_modes,
                setup.datagen.fourier_sigma,
                s,
            )
        },
        samples,
        &setup.gramian,
        seed,
    );
    let mut run = Run::new(out, "observability", seed, setup);
    save_survey_csv(&run.path("csv/survey.csv"), &survey)?;
    run.record("gramian survey", "csv/survey.csv")?;
    survey_stats(&mut run, &survey);
    run.finish()
}

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

pub fn index(setup: &Setup, seed: u64, out: &Path) -> anyhow::Result<RunSummary> {
    let system = system_for(setup)?;
    let x0 = fourier_state(setup, derive_seed(seed, streams::TRAJECTORY, 0))?;
    let pair = empirical_pair(&system, &x0, &setup.gramian)?;
    let report = unobservability_index(&pair, &setup.gramian)?;
    let robustness = delta_robustness_check(&system, &x0, &setup.gramian)?;

    let mut run = Run::new(out, "index", seed, setup);
    let report_rel = format!("runs/{}/report.json", run.id);
    io::save_report_json(&run.path(&report_rel), &report)?;
    run.record("observability report", &report_rel)?;

    run.result_f64("index", report.index);
    run.result_f64("min_eig_gramian", report.min_eig_gramian);
    run.result("effective_rank", json!(report.effective_rank));
    run.result_f64("null_leak", report.null_leak);
    run.result_f64("delta_halving_rel_gap", robustness.rel_gap);
    run.result_f64(
        "worst_case_error_bound",
        worst_case_error_bound(
            report.index,
            setup.ukf.r_sd,
            system.output_dim(),
            setup.gramian.horizon,
        ),
    );
    run.finish()
}

// ---------------------------------------------------------------------------
// ukf
// ---------------------------------------------------------------------------

fn resolve_offset(setup: &Setup, seed: u64, n: usize) -> anyhow::Result<DVector<f64>> {
    match &setup.ukf.init_offset {
        InitOffset::None => Ok(DVector::zeros(n)),
        InitOffset::Fourier { sigma } => Ok(sample_fourier_initial(
            &setup.burgers,
            setup.datagen.fourier_modes,
            *sigma,
            derive_seed(seed, streams::OFFSET, 0),
        )?),
        InitOffset::Explicit { values } => {
            if values.len() != n {
                bail!(Error::DimensionMismatch {
                    what: "explicit initial offset",
                    expected: n,
                    got: values.len(),
                });
            }
            Ok(DVector::from_column_slice(values))
        }
    }
}

/// One seeded UKF experiment; shared by the `ukf` subcommand and the
/// figure pipelines.
struct UkfOutcome {
    truth: Trajectory,
    errors: Vec<f64>,
    estimates: Vec<f64>,
}

fn ukf_experiment(
    setup: &Setup,
    seed: u64,
    steps: usize,
    noise_sd: f64,
    target: usize,
) -> anyhow::Result<UkfOutcome> {
    let system = system_for(setup)?;
    let x0 = fourier_state(setup, derive_seed(seed, streams::TRAJECTORY, 0))?;
    let truth = propagate(&system, &x0, steps)?;
    let measurements =
        observe_trajectory(&system, &truth, noise_sd, derive_seed(seed, streams::NOISE, 0))?;
    let offset = resolve_offset(setup, seed, system.state_dim())?;
    let mut cfg = setup.ukf.clone();
    cfg.p0_scale = Some(cfg.resolve_p0(&offset));
    let xhat0 = &x0 + &offset;
    let run = ukf_run(&system, &truth, &measurements, &cfg, &xhat0)?;
    let errors = error_series(&run, &truth, target)?;
    let estimates = run.estimates.iter().map(|x| x[target - 1]).collect();
    Ok(UkfOutcome {
        truth,
        errors,
        estimates,
    })
}

fn ukf_csv_rows(outcome: &UkfOutcome, target: usize) -> Vec<String> {
    outcome
        .estimates
        .iter()
        .enumerate()
        .map(|(k, est)| {
            format!(
                "{k},{},{},{}",
                fmt_f64(outcome.truth.state(k)[target - 1]),
                fmt_f64(*est),
                fmt_f64(outcome.errors[k])
            )
        })
        .collect()
}

pub fn ukf(
    setup: &Setup,
    seed: u64,
    out: &Path,
    steps: Option<usize>,
    noise_sd: f64,
) -> anyhow::Result<RunSummary> {
    let steps = steps.unwrap_or(setup.burgers.time_steps);
    let target = setup.gramian.target;
    let outcome = ukf_experiment(setup, seed, steps, noise_sd, target)?;

    let mut run = Run::new(out, "ukf", seed, setup);
    let rel = format!("csv/ukf_u{target}.csv");
    run.write_csv(
        "ukf tracking",
        &rel,
        "k,truth,estimate,abs_error",
        &ukf_csv_rows(&outcome, target),
    )?;
    run.result_f64("initial_error", outcome.errors[0]);
    run.result_f64("final_error", *outcome.errors.last().unwrap());
    if outcome.errors.len() > 20 {
        run.result_f64("error_at_20", outcome.errors[20]);
        if outcome.errors[0] > 0.0 {
            run.result_f64("reduction_at_20", outcome.errors[20] / outcome.errors[0]);
        }
    }
    run.finish()
}

// ---------------------------------------------------------------------------
// datagen / train / evaluate / predict
// ---------------------------------------------------------------------------

/// Seed streams local to the CLI pipelines (dataset and model derivations).
mod cli_streams {
    /// Dataset generation: stream `DATASET + case`, index = role (0 train,
    /// 1 validation).
    pub const DATASET: u64 = 200;
    /// Averaged-index surveys: stream `INDEX_SURVEY + case`.
    pub const INDEX_SURVEY: u64 = 210;
    /// Network initialization: stream `NET_INIT + case`, index = regime
    /// (0 noise free, 1 with noise).
    pub const NET_INIT: u64 = 220;
    /// Figure 5/6 sample trajectories: stream `FIGURE_TRAJ + case`.
    pub const FIGURE_TRAJ: u64 = 230;
}

fn dataset_for(
    setup: &Setup,
    master: u64,
    case: u8,
    count: usize,
    noise_sd: f64,
    role: Role,
) -> anyhow::Result<Dataset> {
    let system = system_for(setup)?;
    let role_idx = match role {
        Role::Training => 0,
        Role::Validation => 1,
    };
    let seed = derive_seed(master, cli_streams::DATASET + case as u64, role_idx);
    Ok(build_dataset(
        &system,
        &setup.datagen,
        count,
        noise_sd,
        seed,
        role,
    )?)
}

#[allow(clippy::too_many_arguments)]
pub fn datagen(
    setup: &Setup,
    seed: u64,
    out: &Path,
    count: usize,
    noise_sd: f64,
    training: bool,
    csv: bool,
    case: u8,
) -> anyhow::Result<RunSummary> {
    let role = if training {
        Role::Training
    } else {
        Role::Validation
    };
    let data = dataset_for(setup, seed, case, count, noise_sd, role)?;

    let mut run = Run::new(out, "datagen", seed, setup);
    let role_name = if training { "training" } else { "validation" };
    let rel = format!("datasets/case{case}_{role_name}.bin");
    save_dataset(&run.path(&rel), &data)?;
    run.record("dataset", &rel)?;

    if csv {
        let csv_rel = format!("csv/dataset_case{case}_{role_name}.csv");
        let p = data.input_dim();
        let header = (1..=p)
            .map(|i| format!("z_{i}"))
            .chain(std::iter::once("label".to_string()))
            .collect::<Vec<_>>()
            .join(",");
        let rows: Vec<String> = (0..data.len())
            .map(|i| {
                let (z, label) = data.sample(i);
                z.iter()
                    .map(|v| fmt_f64(*v))
                    .chain(std::iter::once(fmt_f64(label)))
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        run.write_csv("dataset csv export", &csv_rel, &header, &rows)?;
    }

    run.result("samples", json!(data.len()));
    run.result("input_dim", json!(data.input_dim()));
    run.result_f64("noise_sd", noise_sd);
    run.finish()
}

#[allow(clippy::too_many_arguments)]
pub fn train_command(
    setup: &Setup,
    seed: u64,
    out: &Path,
    data_path: Option<&Path>,
    count: usize,
    noise_sd: f64,
    iterations: Option<usize>,
    case: u8,
) -> anyhow::Result<RunSummary> {
    let data = match data_path {
        Some(p) => load_dataset(p)?,
        None => dataset_for(setup, seed, case, count, noise_sd, Role::Training)?,
    };
    let mut cfg = setup.train.clone();
    if let Some(iters) = iterations {
        cfg.max_iterations = iters;
    }
    cfg.init_seed = derive_seed(seed, cli_streams::NET_INIT + case as u64, 0);
    let net = cfg.build_network(data.input_dim())?;
    let result = train(net, &data, &cfg)?;
    let rmse_train = evaluate_rmse(&result.net, &data)?;

    let mut run = Run::new(out, "train", seed, setup);
    let model_rel = format!("models/case{case}.bin");
    save_model(&run.path(&model_rel), &result.net)?;
    run.record("trained model", &model_rel)?;
    let loss_rows: Vec<String> = result
        .loss_history
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{i},{}", fmt_f64(*l)))
        .collect();
    run.write_csv("loss history", "csv/loss_history.csv", "iteration,loss", &loss_rows)?;

    run.result_f64("rmse_train", rmse_train);
    run.result_f64("final_loss", *result.loss_history.last().unwrap());
    run.result("iterations", json!(result.iterations));
    run.result("converged", json!(result.converged));
    run.result("line_search_failed", json!(result.line_search_failed));
    run.finish()
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    setup: &Setup,
    seed: u64,
    out: &Path,
    model_path: &Path,
    data_path: Option<&Path>,
    count: usize,
    noise_sd: f64,
    case: u8,
) -> anyhow::Result<RunSummary> {
    let net = load_model(model_path)?;
    let data = match data_path {
        Some(p) => load_dataset(p)?,
        None => dataset_for(setup, seed, case, count, noise_sd, Role::Validation)?,
    };
    let rmse = evaluate_rmse(&net, &data)?;
    let mut run = Run::new(out, "evaluate", seed, setup);
    run.result_f64("rmse", rmse);
    run.result("samples", json!(data.len()));
    run.finish()
}

pub fn predict(_out: &Path, model_path: &Path, window_path: &Path) -> anyhow::Result<RunSummary> {
    let net = load_model(model_path)?;
    let window = load_window_csv(window_path)?;
    let z = flatten_window(&window, 0, window.horizon())?;
    if z.len() != net.input_dim() {
        bail!(Error::DimensionMismatch {
            what: "flattened window",
            expected: net.input_dim(),
            got: z.len(),
        });
    }
    let estimate = net.forward(&z)?;
    let mut results = BTreeMap::new();
    results.insert("estimate".to_string(), json!(estimate));
    results.insert("window_samples".to_string(), json!(window.horizon() + 1));
    Ok(RunSummary {
        run_id: "predict".to_string(),
        artifacts: Vec::new(),
        results,
    })
}

/// Parse an output-window CSV in the `k,y_1,...,y_m` format.
fn load_window_csv(path: &Path) -> anyhow::Result<OutputSequence> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read window {}", path.display()))?;
    let mut outputs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with('k')) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            bail!("window {}: line {} has no output values", path.display(), i + 1);
        }
        let values: Result<Vec<f64>, _> = fields[1..].iter().map(|f| f.trim().parse()).collect();
        let values = values.map_err(|e| anyhow!("window {}: line {}: {e}", path.display(), i + 1))?;
        outputs.push(DVector::from_vec(values));
    }
    Ok(OutputSequence::from_outputs(outputs, None)?)
}

// ---------------------------------------------------------------------------
// reproduce pipelines
// ---------------------------------------------------------------------------

pub fn reproduce(setup: &Setup, seed: u64, out: &Path, what: &str) -> anyhow::Result<RunSummary> {
    match what {
        "fig1" => fig1(setup, seed, out),
        "fig2" => fig_ukf(setup, seed, out, "fig2", 12),
        "fig3-4" => fig_ukf(setup, seed, out, "fig3-4", 25),
        "fig5" => fig_deepfilter(setup, seed, out, "fig5", 1),
        "fig6" => fig_deepfilter(setup, seed, out, "fig6", 2),
        "table1" => table1(setup, seed, out),
        other => bail!(
            "unknown reproduction target {other:?}; expected one of fig1, fig2, fig3-4, fig5, fig6, table1"
        ),
    }
}

/// Gramian eigenvalue survey at 5000 sampled states (Case 1, K+1 = 10).
fn fig1(setup: &Setup, seed: u64, out: &Path) -> anyhow::Result<RunSummary> {
    let mut setup = setup.clone();
    setup.sensors = SensorLayout::case1();
    let system = system_for(&setup)?;
    let survey = gramian_survey(
        &system,
        |s| {
            sample_fourier_initial(
                &setup.burgers,
                setup.datagen.fourier_modes,
                setup.datagen.fourier_sigma,
                s,
            )
        },
        5000,
        &setup.gramian,
        seed,
    );
    let mut run = Run::new(out, "fig1", seed, &setup);
    save_survey_csv(&run.path("csv/fig1_min_eig.csv"), &survey)?;
    run.record("fig1 survey", "csv/fig1_min_eig.csv")?;
    survey_stats(&mut run, &survey);
    run.finish()
}

/// UKF tracking of one targeted variable (Case 1 sensors, sensor noise
/// 0.028), the contrast between figs. 2 (u12) and 3-4 (u25).
fn fig_ukf(
    setup: &Setup,
    seed: u64,
    out: &Path,
    name: &str,
    target: usize,
) -> anyhow::Result<RunSummary> {
    let mut setup = setup.clone();
    setup.sensors = SensorLayout::case1();
    setup.gramian.target = target;
    let steps = setup.burgers.time_steps;
    let outcome = ukf_experiment(&setup, seed, steps, 0.028, target)?;

    let mut run = Run::new(out, name, seed, &setup);
    let rel = format!("csv/{}_ukf_u{target}.csv", name.replace('-', "_"));
    run.write_csv(
        "ukf tracking",
        &rel,
        "k,truth,estimate,abs_error",
        &ukf_csv_rows(&outcome, target),
    )?;
    run.result_f64("initial_error", outcome.errors[0]);
    run.result_f64("error_at_20", outcome.errors[20]);
    run.result_f64("reduction_at_20", outcome.errors[20] / outcome.errors[0]);
    run.finish()
}

/// Train the with-noise deep filter for a sensor case and overlay its
/// sliding-window estimates on a fresh trajectory.
fn fig_deepfilter(
    setup: &Setup,
    seed: u64,
    out: &Path,
    name: &str,
    case: u8,
) -> anyhow::Result<RunSummary> {
    let mut setup = setup.clone();
    setup.sensors = SensorLayout::for_case(case)?;
    let system = system_for(&setup)?;
    let noise_sd = setup.table1.noise_sd;

    let (net, _, _) = trained_net(&setup, seed, case, noise_sd, 1)?;

    let horizon = setup.datagen.horizon;
    let target = setup.datagen.target;
    let traj_seed = derive_seed(seed, cli_streams::FIGURE_TRAJ + case as u64, 0);
    let noise_seed = derive_seed(seed, cli_streams::FIGURE_TRAJ + case as u64, 1);
    let x0 = fourier_state(&setup, traj_seed)?;
    let truth = propagate(&system, &x0, setup.burgers.time_steps)?;
    let outputs = observe_trajectory(&system, &truth, noise_sd, noise_seed)?;

    let mut rows = Vec::new();
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for start in 0..=(setup.burgers.time_steps - horizon) {
        let z = flatten_window(&outputs, start, horizon)?;
        let estimate = net.forward(&z)?;
        let k = start + horizon;
        let truth_value = truth.state(k)[target - 1];
        sum_sq += (estimate - truth_value) * (estimate - truth_value);
        count += 1;
        rows.push(format!(
            "{k},{},{},{}",
            fmt_f64(truth_value),
            fmt_f64(estimate),
            fmt_f64((estimate - truth_value).abs())
        ));
    }

    let mut run = Run::new(out, name, seed, &setup);
    let rel = format!("csv/{name}_deepfilter_case{case}.csv");
    run.write_csv("deep filter tracking", &rel, "k,truth,estimate,abs_error", &rows)?;
    let model_rel = format!("models/{name}_case{case}.bin");
    save_model(&run.path(&model_rel), &net)?;
    run.record("deep filter model", &model_rel)?;
    run.result_f64("trajectory_rmse", (sum_sq / count as f64).sqrt());
    run.finish()
}

/// Train one deep filter for `(case, regime)`; regime 0 is noise free,
/// regime 1 adds sensor noise to the windows.
fn trained_net(
    setup: &Setup,
    master: u64,
    case: u8,
    noise_sd: f64,
    regime: u64,
) -> anyhow::Result<(Mlp, f64, Dataset)> {
    let train_set = dataset_for(
        setup,
        master,
        case,
        setup.table1.trajectories,
        noise_sd,
        Role::Training,
    )?;
    let val_set = dataset_for(
        setup,
        master,
        case,
        setup.table1.trajectories,
        noise_sd,
        Role::Validation,
    )?;
    let mut cfg = setup.train.clone();
    cfg.init_seed = derive_seed(master, cli_streams::NET_INIT + case as u64, regime);
    let net = cfg.build_network(train_set.input_dim())?;
    let result = train(net, &train_set, &cfg)?;
    let rmse = evaluate_rmse(&result.net, &val_set)?;
    Ok((result.net, rmse, val_set))
}

/// The four-row RMSE table: both sensor cases, noise-free and with-noise
/// regimes, plus the averaged observability index per case.
fn table1(setup: &Setup, seed: u64, out: &Path) -> anyhow::Result<RunSummary> {
    let mut rows = Vec::new();
    let mut run_results: Vec<(String, f64)> = Vec::new();
    let mut model_files: Vec<(String, Mlp)> = Vec::new();

    for case in [1u8, 2u8] {
        let mut case_setup = setup.clone();
        case_setup.sensors = SensorLayout::for_case(case)?;
        let system = system_for(&case_setup)?;

        // Averaged index over freshly sampled states from the same
        // distribution as the validation trajectories.
        let survey_seed = derive_seed(seed, cli_streams::INDEX_SURVEY + case as u64, 0);
        let survey = gramian_survey(
            &system,
            |s| {
                sample_fourier_initial(
                    &case_setup.burgers,
                    case_setup.datagen.fourier_modes,
                    case_setup.datagen.fourier_sigma,
                    s,
                )
            },
            case_setup.table1.index_samples,
            &case_setup.gramian,
            survey_seed,
        );
        let index_avg = survey
            .mean_finite_index()
            .ok_or_else(|| anyhow!("case {case}: no finite indexes in survey"))?;
        run_results.push((format!("index_avg_case{case}"), index_avg));

        for (regime, regime_name, noise_sd) in [
            (0u64, "noise_free", 0.0),
            (1u64, "with_noise", case_setup.table1.noise_sd),
        ] {
            let (net, rmse, _) = trained_net(&case_setup, seed, case, noise_sd, regime)?;
            rows.push(format!(
                "{case},{},{regime_name},{}",
                fmt_f64(index_avg),
                fmt_f64(rmse)
            ));
            run_results.push((format!("rmse_case{case}_{regime_name}"), rmse));
            model_files.push((format!("models/table1_case{case}_{regime_name}.bin"), net));
        }
    }

    let mut run = Run::new(out, "table1", seed, setup);
    run.write_csv("table1", "csv/table1.csv", "case,index_avg,regime,rmse", &rows)?;
    for (rel, net) in &model_files {
        save_model(&run.path(rel), net)?;
        run.record("table1 model", rel)?;
    }
    for (key, value) in run_results {
        run.result_f64(&key, value);
    }
    run.finish()
}
