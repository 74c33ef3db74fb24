//! Executing an experiment and writing its outputs.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use dppcond::kernel::io;
use dppcond::linalg::CVector;
use dppcond::palm::ConditioningTolerances;
use dppcond::sampling::oracle::DEFAULT_CAP;
use dppcond::sampling::{trial_rng, SampleBatch};
use dppcond::verification::corpus::{
    random_disjoint_windows, random_nested_windows, random_outside_projection, random_points_in, random_test_function,
    random_window,
};
use dppcond::verification::*;
use dppcond::{Configuration, KernelMatrix, KernelTolerances, SiteSubset};
use num_complex::Complex64;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{CheckParams, CheckSpec, ExperimentConfig, ModeSelection};
use crate::corpus::Manifest;
use crate::factory_spec::parse_factory;
use crate::{CliError, CliResult};

/// Output directory used when neither the config nor `--out` names one.
pub const DEFAULT_OUTPUT_DIR: &str = "dppcond-out";

/// A kernel after sources are expanded; corpus entries get ids
/// `<source id>/<entry label>`.
#[derive(Debug, Clone)]
pub struct KernelInstance {
    pub id: String,
    pub source: String,
    pub kernel: KernelMatrix,
}

/// One line of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub kernel: String,
    pub instance: usize,
    #[serde(flatten)]
    pub result: CheckResult,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub entries: Vec<ReportEntry>,
    pub output_dir: PathBuf,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.result.pass)
    }

    /// 0 when every check passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            1
        }
    }
}

/// Expands every kernel source. Relative paths are taken from `base_dir`.
pub fn resolve_kernels(config: &ExperimentConfig, base_dir: &Path) -> CliResult<Vec<KernelInstance>> {
    let mut out = Vec::new();
    for source in &config.kernels {
        let single = |kernel: KernelMatrix| KernelInstance { id: source.id.clone(), source: source.id.clone(), kernel };
        if let Some(file) = &source.file {
            out.push(single(load_kernel(&base_dir.join(file))?));
        } else if let Some(spec) = &source.factory {
            out.push(single(parse_factory(spec, source.params.as_ref())?.build()?.0));
        } else if let Some(spec) = &source.corpus {
            for e in spec.generate()? {
                out.push(KernelInstance {
                    id: format!("{}/{}", source.id, e.label()),
                    source: source.id.clone(),
                    kernel: e.kernel,
                });
            }
        } else if let Some(path) = &source.manifest {
            let path = base_dir.join(path);
            let dir = path.parent().unwrap_or(Path::new("."));
            for entry in Manifest::load(&path)?.entries {
                let kernel = load_kernel(&dir.join(&entry.file))?;
                let label = entry.file.trim_end_matches(".json");
                out.push(KernelInstance { id: format!("{}/{label}", source.id), source: source.id.clone(), kernel });
            }
        }
    }
    Ok(out)
}

pub fn load_kernel(path: &Path) -> CliResult<KernelMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(io::from_json(&text, KernelTolerances::default())?.kernel)
}

/// Checks that never use the sampler, and the one that always does.
const EXACT_ONLY: &[&str] = &["dilation", "measure_consistency"];
const MONTE_CARLO_ONLY: &[&str] = &["sampler_agreement"];

fn modes_for(check: &str, selection: ModeSelection) -> Vec<Mode> {
    if EXACT_ONLY.contains(&check) {
        vec![Mode::Exact]
    } else if MONTE_CARLO_ONLY.contains(&check) {
        vec![Mode::MonteCarlo]
    } else {
        selection.modes().to_vec()
    }
}

/// A check applied to one kernel instance, in one or both modes.
struct Unit<'a> {
    spec_index: usize,
    spec: &'a CheckSpec,
    instance: usize,
    kernel: &'a KernelInstance,
    seed: u64,
    modes: Vec<Mode>,
}

struct Timed {
    entries: Vec<ReportEntry>,
    seconds: f64,
}

/// Runs every check of `config` and writes the output files. `base_dir`
/// anchors relative kernel paths and a relative `output_dir`.
pub fn run(config: &ExperimentConfig, base_dir: &Path) -> CliResult<RunOutcome> {
    config.validate()?;
    let started = Instant::now();
    let master = config.seed.expect("validated");
    let tolerances = config.tolerances()?;
    let kernels = resolve_kernels(config, base_dir)?;

    let mut units = Vec::new();
    for (spec_index, spec) in config.checks.iter().enumerate() {
        if spec.trials == Some(0) {
            return Err(CliError::Config(format!("check {}: trials must be at least 1", spec.check)));
        }
        for (instance, kernel) in kernels.iter().enumerate() {
            if let Some(ids) = &spec.kernels {
                if !ids.contains(&kernel.source) {
                    continue;
                }
            }
            units.push(Unit {
                spec_index,
                spec,
                instance,
                kernel,
                seed: 0,
                modes: modes_for(&spec.check, spec.mode.unwrap_or(config.mode)),
            });
        }
    }
    // Unit seeds come from the unit's position so they do not depend on
    // scheduling.
    for (i, unit) in units.iter_mut().enumerate() {
        unit.seed = trial_rng(master, i as u64).next_u64();
    }

    let base_ctx = CheckContext {
        mode: Mode::Exact,
        trials: config.trials(),
        seed: 0,
        tolerances,
        conditioning: ConditioningTolerances::default(),
        oracle_cap: config.oracle_cap.unwrap_or(DEFAULT_CAP),
    };
    let results: Vec<CliResult<Timed>> = units
        .par_iter()
        .map(|unit| {
            let t = Instant::now();
            let entries = execute(unit, &base_ctx)?;
            Ok(Timed { entries, seconds: t.elapsed().as_secs_f64() })
        })
        .collect();
    let mut timed = Vec::with_capacity(results.len());
    for r in results {
        timed.push(r?);
    }

    let mut keyed: Vec<(usize, ReportEntry)> = Vec::new();
    for (unit, t) in units.iter().zip(&timed) {
        keyed.extend(t.entries.iter().cloned().map(|e| (unit.spec_index, e)));
    }
    keyed.sort_by(|(sa, a), (sb, b)| {
        (a.result.check_id.as_str(), a.instance, *sa, a.result.mode).cmp(&(b.result.check_id.as_str(), b.instance, *sb, b.result.mode))
    });
    let entries: Vec<ReportEntry> = keyed.into_iter().map(|(_, e)| e).collect();

    let output_dir = base_dir.join(config.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)));
    write_outputs(&output_dir, &entries)?;
    let metadata = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": master,
        "mode": config.mode,
        "trials": config.trials(),
        "threads": rayon::current_num_threads(),
        "finished_unix_seconds": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "elapsed_seconds": started.elapsed().as_secs_f64(),
        "units": units.iter().zip(&timed).map(|(u, t)| json!({
            "check": u.spec.check,
            "kernel": u.kernel.id,
            "seconds": t.seconds,
        })).collect::<Vec<_>>(),
    });
    write_file(&output_dir.join("metadata.json"), &(serde_json::to_string_pretty(&metadata).expect("serializes") + "\n"))?;
    Ok(RunOutcome { entries, output_dir })
}

fn execute(unit: &Unit, base: &CheckContext) -> CliResult<Vec<ReportEntry>> {
    let k = &unit.kernel.kernel;
    let inputs = Inputs::draw(&unit.spec.check, &unit.spec.params, k, unit.seed)?;
    unit.modes
        .iter()
        .map(|&mode| {
            let ctx = CheckContext { mode, seed: unit.seed, trials: unit.spec.trials.unwrap_or(base.trials), ..*base };
            let result = inputs.run(k, &ctx).map_err(|e| match CliError::from(e) {
                CliError::Config(msg) => CliError::Config(format!("{} on {}: {msg}", unit.spec.check, unit.kernel.id)),
                CliError::Numerical(msg) => CliError::Numerical(format!("{} on {}: {msg}", unit.spec.check, unit.kernel.id)),
                other => other,
            })?;
            Ok(ReportEntry { kernel: unit.kernel.id.clone(), instance: unit.instance, result })
        })
        .collect()
}

/// Concrete check inputs, fixed before any mode runs so that Exact and
/// Monte Carlo results of one unit see the same windows.
enum Inputs {
    OneStep(SiteSubset),
    Local(SiteSubset, dppcond::linalg::CMatrix, Configuration),
    TwoWindow(SiteSubset, SiteSubset),
    Sequence(Vec<SiteSubset>, SiteSubset, CVector),
    Variance(SiteSubset, CVector),
    Completeness(Option<SiteSubset>),
    Tail(SiteSubset, Vec<usize>),
    Measure(SiteSubset, SiteSubset, SiteSubset),
    Sampler,
    Dilation,
}

fn subset(n: usize, idx: &[usize]) -> CliResult<SiteSubset> {
    Ok(SiteSubset::from_indices(n, idx)?)
}

fn given_or<R: Rng>(n: usize, idx: &Option<Vec<usize>>, rng: &mut R, draw: fn(usize, &mut R) -> SiteSubset) -> CliResult<SiteSubset> {
    match idx {
        Some(idx) => subset(n, idx),
        None => Ok(draw(n, rng)),
    }
}

fn test_function<R: Rng>(k: &KernelMatrix, given: &Option<Vec<f64>>, support: &SiteSubset, rng: &mut R) -> CliResult<CVector> {
    match given {
        Some(values) => {
            if values.len() != k.n() {
                return Err(CliError::Config(format!("phi has {} values for {} sites", values.len(), k.n())));
            }
            Ok(CVector::from_iterator(k.n(), values.iter().map(|&v| Complex64::new(v, 0.0))))
        }
        None => Ok(random_test_function(support, !k.is_real(), rng)),
    }
}

impl Inputs {
    fn draw(check: &str, p: &CheckParams, k: &KernelMatrix, seed: u64) -> CliResult<Self> {
        let n = k.n();
        let mut rng = trial_rng(seed, u64::MAX);
        let rng = &mut rng;
        Ok(match check {
            "one_step_martingale" => Inputs::OneStep(given_or(n, &p.window, rng, random_window)?),
            "local_identities" => {
                let b = given_or(n, &p.window, rng, random_window)?;
                let q = random_outside_projection(&b, p.q_rank.unwrap_or(2), rng)?;
                let points = match &p.points {
                    Some(pts) => Configuration::from_unsorted(pts.clone(), n)?,
                    None => random_points_in(&b, 3, rng),
                };
                Inputs::Local(b, q, points)
            }
            "two_window_commutation" => {
                let (a, b) = match (&p.a, &p.b) {
                    (Some(a), Some(b)) => (subset(n, a)?, subset(n, b)?),
                    (None, None) => random_disjoint_windows(n, rng)?,
                    _ => return Err(CliError::Config("two_window_commutation needs both a and b or neither".into())),
                };
                Inputs::TwoWindow(a, b)
            }
            "martingale_sequence" => {
                let (windows, w) = match (&p.windows, &p.w) {
                    (Some(ws), Some(w)) => (ws.iter().map(|x| subset(n, x)).collect::<CliResult<_>>()?, subset(n, w)?),
                    (None, None) => random_nested_windows(n, p.stages.unwrap_or(3), rng)?,
                    _ => return Err(CliError::Config("martingale_sequence needs both windows and w or neither".into())),
                };
                let phi = test_function(k, &p.phi, &w.complement(), rng)?;
                Inputs::Sequence(windows, w, phi)
            }
            "variance_bound" => {
                let b = given_or(n, &p.window, rng, random_window)?;
                let phi = test_function(k, &p.phi, &b.complement(), rng)?;
                Inputs::Variance(b, phi)
            }
            "completeness" => Inputs::Completeness(p.window.as_ref().map(|w| subset(n, w)).transpose()?),
            "tail_mixing" => {
                let step = (n / 8).max(1);
                let d = match &p.window {
                    Some(w) => subset(n, w)?,
                    None => SiteSubset::range(n, 0, step)?,
                };
                let depths = p.depths.clone().unwrap_or_else(|| (1..=4).map(|j| j * step).collect());
                Inputs::Tail(d, depths)
            }
            "measure_consistency" => {
                let b = given_or(n, &p.window, rng, random_window)?;
                let (w1, w2) = match (&p.w1, &p.w2) {
                    (Some(a), Some(b)) => (subset(n, a)?, subset(n, b)?),
                    (None, None) => random_disjoint_windows(n, rng)?,
                    _ => return Err(CliError::Config("measure_consistency needs both w1 and w2 or neither".into())),
                };
                Inputs::Measure(b, w1, w2)
            }
            "sampler_agreement" => Inputs::Sampler,
            "dilation" => Inputs::Dilation,
            other => return Err(CliError::Config(format!("unknown check {other:?}"))),
        })
    }

    fn run(&self, k: &KernelMatrix, ctx: &CheckContext) -> dppcond::Result<CheckResult> {
        match self {
            Inputs::OneStep(b) => check_one_step_martingale(k, b, ctx),
            Inputs::Local(b, q, points) => check_local_identities(k, b, q, points, ctx),
            Inputs::TwoWindow(a, b) => check_two_window_commutation(k, a, b, ctx),
            Inputs::Sequence(ws, w, phi) => check_martingale_sequence(k, ws, w, phi, ctx),
            Inputs::Variance(b, phi) => check_variance_bound(k, b, phi, ctx),
            Inputs::Completeness(w) => check_completeness(k, w.as_ref(), ctx),
            Inputs::Tail(d, depths) => check_tail_mixing(k, d, depths, ctx),
            Inputs::Measure(b, w1, w2) => check_measure_consistency(k, b, w1, w2, ctx),
            Inputs::Sampler => check_sampler_agreement(k, ctx),
            Inputs::Dilation => check_dilation(k, ctx),
        }
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn write_outputs(dir: &Path, entries: &[ReportEntry]) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let report = serde_json::to_string_pretty(entries).expect("report serializes");
    write_file(&dir.join("report.json"), &(report + "\n"))?;

    let summary_path = dir.join("summary.csv");
    let mut summary = csv::Writer::from_path(&summary_path).map_err(|e| CliError::Config(e.to_string()))?;
    let csv_err = |e: csv::Error| CliError::Config(format!("writing {}: {e}", summary_path.display()));
    summary.write_record(["check_id", "mode", "statistic", "tolerance", "pass", "kernel"]).map_err(csv_err)?;
    for e in entries {
        let r = &e.result;
        summary
            .write_record([
                r.check_id.clone(),
                r.mode.as_str().to_string(),
                format!("{:e}", r.statistic),
                format!("{:e}", r.tolerance),
                r.pass.to_string(),
                e.kernel.clone(),
            ])
            .map_err(csv_err)?;
    }
    summary.flush().map_err(|e| CliError::io(&summary_path, e))?;

    let plots = dir.join("plots");
    for e in entries.iter().filter(|e| e.result.check_id == "tail_mixing") {
        std::fs::create_dir_all(&plots).map_err(|err| CliError::io(&plots, err))?;
        let path = plots.join(format!("tail_mixing__{}__{}.csv", file_stem(&e.kernel), e.result.mode.as_str()));
        let mut text = String::from("depth,kernel_mean,kernel_se,event_mean,event_se\n");
        for d in e.result.details["depths"].as_array().into_iter().flatten() {
            text.push_str(&format!(
                "{},{:e},{:e},{:e},{:e}\n",
                d["depth"],
                d["kernel_mean"].as_f64().unwrap_or(f64::NAN),
                d["kernel_se"].as_f64().unwrap_or(f64::NAN),
                d["event_mean"].as_f64().unwrap_or(f64::NAN),
                d["event_se"].as_f64().unwrap_or(f64::NAN),
            ));
        }
        write_file(&path, &text)?;
    }
    Ok(())
}

/// Draws `trials` samples of one kernel and writes them as JSON lines.
pub fn sample_to_file(k: &KernelMatrix, seed: u64, trials: usize, kernel_id: &str, path: &Path) -> CliResult<SampleBatch> {
    let batch = dppcond::sampling::sample_batch(k, seed, trials, kernel_id)?;
    write_file(path, &batch.to_json_lines())?;
    Ok(batch)
}
