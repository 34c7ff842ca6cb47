use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::Utc;
use pruned_ntk::{
    kernel_recursion, ntk_gram, ntk_monte_carlo, ntk_row, pruned_limit, run_alpha_sweep, run_width_sweep,
    AlphaSweepSpec, GramSource, InputPairSource, InputPoint, KernelRegressor, NetworkConfig, WidthScaling,
    WidthSweepSpec,
};
use serde::Serialize;

use crate::args::{Command, InputArgs, NtkArgs, RegressArgs, ReplayArgs, Scaling, SweepAlphaArgs, SweepWidthArgs};
use crate::error::{CliError, CliResult};
use crate::io::{csv_bytes, parse_vector, read_rows, sha256_hex, write_file};
use crate::manifest::{FileDigest, NtkRun, RegressRun, RunConfig, RunManifest};

fn input_source(args: &InputArgs) -> CliResult<InputPairSource> {
    match (&args.x, &args.x2) {
        (None, None) => Ok(InputPairSource::SeededRandomUnit { dim: args.input_dim }),
        (Some(x), x2) => {
            let x = parse_vector(x)?;
            let x2 = match x2 {
                Some(v) => parse_vector(v)?,
                None => x.clone(),
            };
            Ok(InputPairSource::Explicit { x, x2 })
        }
        (None, Some(_)) => Err(CliError::Usage("--x2 requires --x".into())),
    }
}

fn resolve(command: &Command) -> CliResult<(RunConfig, Option<PathBuf>)> {
    Ok(match command {
        Command::Ntk(a) => (RunConfig::Ntk(ntk_run(a)?), a.out.clone()),
        Command::SweepWidth(a) => (RunConfig::SweepWidth(width_spec(a)?), Some(a.out.clone())),
        Command::SweepAlpha(a) => (RunConfig::SweepAlpha(alpha_spec(a)?), Some(a.out.clone())),
        Command::Regress(a) => (RunConfig::Regress(regress_run(a)), a.out.clone()),
        Command::Replay(_) => unreachable!("replay is resolved from its manifest"),
    })
}

fn ntk_run(a: &NtkArgs) -> CliResult<NtkRun> {
    Ok(NtkRun {
        depth: a.depth,
        width: a.width,
        alpha: a.alpha,
        rescale: a.rescale.enabled(),
        samples: a.samples,
        seed: a.seed.seed,
        inputs: input_source(&a.inputs)?,
        limit: a.limit,
    })
}

fn width_spec(a: &SweepWidthArgs) -> CliResult<WidthSweepSpec> {
    Ok(WidthSweepSpec {
        widths: a.widths.clone(),
        depth: a.depth,
        alpha: a.alpha,
        rescale: a.rescale.enabled(),
        n_samples: a.samples,
        seed: a.seed.seed,
        inputs: input_source(&a.inputs)?,
        include_control: a.control,
    })
}

fn alpha_spec(a: &SweepAlphaArgs) -> CliResult<AlphaSweepSpec> {
    Ok(AlphaSweepSpec {
        alphas: a.alphas.clone(),
        base_width: a.base_width,
        scaling: match a.scaling {
            Scaling::Linear => WidthScaling::Linear,
            Scaling::Quadratic => WidthScaling::Quadratic,
        },
        n_samples: a.samples,
        depth: a.depth,
        rescale: a.rescale.enabled(),
        seed: a.seed.seed,
        inputs: input_source(&a.inputs)?,
        max_width: a.max_width,
    })
}

fn regress_run(a: &RegressArgs) -> RegressRun {
    RegressRun {
        train: a.train.clone(),
        test: a.test.clone(),
        depth: a.depth,
        jitter: a.jitter,
        kernel_scale: a.kernel_scale,
    }
}

#[derive(Serialize)]
struct SampleOut {
    sample_id: u64,
    total: f64,
    per_layer: Vec<f64>,
}

#[derive(Serialize)]
struct NtkReport<'a> {
    mean: f64,
    std: f64,
    mad: Option<f64>,
    limit: Option<f64>,
    n_samples: usize,
    per_layer_mean: Vec<f64>,
    per_layer_limit: Option<Vec<f64>>,
    x: &'a [f64],
    x2: &'a [f64],
    config: &'a NtkRun,
    samples: Vec<SampleOut>,
}

fn ntk_output(run: &NtkRun) -> CliResult<Vec<u8>> {
    let (x, x2) = run.inputs.resolve(run.seed)?;
    let config = NetworkConfig::uniform(x.dim(), run.depth, run.width, run.alpha)
        .with_rescale(run.rescale)
        .with_seed(run.seed);
    config.validate()?;
    let (limit, per_layer_limit) = if run.limit {
        let kernel = kernel_recursion(&x, &x2, run.depth)?;
        let limit = pruned_limit(&kernel, run.alpha, run.rescale);
        // every layer's gradient carries the same mask factor
        let factor = limit / kernel.theta_inf;
        let terms = kernel
            .layer_terms()
            .iter()
            .map(|t| if factor.is_finite() { t * factor } else { *t })
            .collect::<Vec<_>>();
        (Some(limit), Some(terms))
    } else {
        (None, None)
    };
    let agg = ntk_monte_carlo(&config, &x, &x2, run.samples, limit.unwrap_or(f64::NAN))?;
    let report = NtkReport {
        mean: agg.mean,
        std: agg.sample_std,
        mad: limit.map(|_| agg.mad_vs_limit),
        limit,
        n_samples: agg.n_samples,
        per_layer_mean: agg.per_layer_mean.clone(),
        per_layer_limit,
        x: x.as_slice(),
        x2: x2.as_slice(),
        config: run,
        samples: agg
            .samples
            .iter()
            .map(|s| SampleOut {
                sample_id: s.sample_id,
                total: s.total,
                per_layer: s.per_layer.clone(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    bytes.push(b'\n');
    Ok(bytes)
}

fn regress_output(run: &RegressRun) -> CliResult<Vec<u8>> {
    let train = read_rows(&run.train)?;
    let test = read_rows(&run.test)?;
    if train.is_empty() {
        return Err(CliError::Usage(format!("{}: no training rows", run.train.display())));
    }
    let cols = train[0].len();
    if cols < 2 {
        return Err(CliError::Usage("training rows need at least one input column and a target".into()));
    }
    if let Some(bad) = train.iter().position(|r| r.len() != cols) {
        return Err(CliError::Usage(format!("training row {} has {} columns, expected {cols}", bad + 1, train[bad].len())));
    }
    if let Some(bad) = test.iter().position(|r| r.len() != cols - 1) {
        return Err(CliError::Usage(format!(
            "test row {} has {} columns, expected {}",
            bad + 1,
            test[bad].len(),
            cols - 1
        )));
    }
    if !(run.kernel_scale.is_finite() && run.kernel_scale > 0.0) {
        return Err(CliError::Usage("kernel scale must be positive".into()));
    }
    let points = train
        .iter()
        .map(|r| InputPoint::new(r[..cols - 1].to_vec()))
        .collect::<pruned_ntk::Result<Vec<_>>>()?;
    let y: Vec<f64> = train.iter().map(|r| r[cols - 1]).collect();
    let source = GramSource::AnalyticLimit { depth: run.depth };
    let gram = ntk_gram(source, &points)? * run.kernel_scale;
    let model = KernelRegressor::fit(&gram, &y, run.jitter)?;
    let predictions = test
        .iter()
        .map(|r| {
            let x = InputPoint::new(r.clone())?;
            let k: Vec<f64> = ntk_row(source, &x, &points)?.iter().map(|v| v * run.kernel_scale).collect();
            model.predict(&k)
        })
        .collect::<pruned_ntk::Result<Vec<f64>>>()?;
    let rows: Vec<(f64,)> = predictions.into_iter().map(|p| (p,)).collect();
    csv_bytes(&rows, false)
}

/// Output bytes of a run. Deterministic in `config`.
pub fn execute(config: &RunConfig) -> CliResult<Vec<u8>> {
    match config {
        RunConfig::Ntk(run) => ntk_output(run),
        RunConfig::SweepWidth(spec) => csv_bytes(&run_width_sweep(spec)?.rows, true),
        RunConfig::SweepAlpha(spec) => csv_bytes(&run_alpha_sweep(spec)?.rows, true),
        RunConfig::Regress(run) => regress_output(run),
    }
}

fn input_digests(config: &RunConfig) -> CliResult<Vec<FileDigest>> {
    match config {
        RunConfig::Regress(run) => [&run.train, &run.test]
            .into_iter()
            .map(|p| {
                let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
                Ok(FileDigest::of(p, &bytes))
            })
            .collect(),
        _ => Ok(Vec::new()),
    }
}

/// Runs `config` and writes its output (plus manifest) to `out`, or the output
/// alone to stdout. Returns the output digest.
fn run_and_emit(config: RunConfig, out: Option<&Path>) -> CliResult<String> {
    let started_at = Utc::now();
    let bytes = execute(&config)?;
    let digest = sha256_hex(&bytes);
    match out {
        Some(path) => {
            write_file(path, &bytes)?;
            let manifest = RunManifest {
                tool: env!("CARGO_BIN_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                seed: config.seed(),
                inputs: input_digests(&config)?,
                config,
                started_at,
                finished_at: Utc::now(),
                outputs: vec![FileDigest::of(path, &bytes)],
            };
            manifest.write(&RunManifest::sidecar_path(path))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::io("<stdout>", e))?;
        }
    }
    Ok(digest)
}

fn replay(args: &ReplayArgs) -> CliResult<()> {
    let manifest = RunManifest::read(&args.manifest)?;
    let recorded = manifest
        .outputs
        .first()
        .ok_or_else(|| CliError::Usage("manifest lists no outputs".into()))?;
    let out = args.out.clone().unwrap_or_else(|| recorded.path.clone());
    let digest = run_and_emit(manifest.config.clone(), Some(&out))?;
    if digest != recorded.sha256 {
        return Err(CliError::Mismatch(format!("{} != recorded {}", digest, recorded.sha256)));
    }
    eprintln!("{}: digest matches manifest", out.display());
    Ok(())
}

pub fn dispatch(command: &Command) -> CliResult<()> {
    if let Command::Replay(args) = command {
        return replay(args);
    }
    let (config, out) = resolve(command)?;
    run_and_emit(config, out.as_deref())?;
    Ok(())
}
