use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use log::warn;
use serde::Serialize;

use heavytail_ph::fit::{compare, fit, FitMethod, FitReport};
use heavytail_ph::model_io::{ModelMeta, StoredModel};
use heavytail_ph::queueing::{mph1_metrics, queue_length_dist, waiting_time_distribution, QueueLengthDist, QueueMetrics};
use heavytail_ph::sim::{run_mg1, target_sampler, ServiceSampler, SimConfig};
use heavytail_ph::{Error, TargetDistribution};

use crate::args::{CompareArgs, EvalArgs, FitArgs, GridKind, QueueArgs, SimulateArgs};
use crate::manifest::Run;

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a FitReport,
    mean_rel_error: f64,
    cv_rel_error: f64,
}

fn report_file(report: &FitReport) -> ReportFile<'_> {
    ReportFile { report, mean_rel_error: report.mean_rel_error(), cv_rel_error: report.cv_rel_error() }
}

fn load_model(path: &PathBuf) -> Result<StoredModel> {
    StoredModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let target = args.target.build()?;
    let config = args.settings.config(args.method.into())?;
    let mut run = Run::start("fit", &args.out, args.target.inputs())?;
    let outcome = fit(&target, &config)?;

    let stored = StoredModel::new(outcome.model.clone(), ModelMeta::for_fit(&outcome, &target));
    let model_path = run.path("model.json");
    stored.save(&model_path)?;
    run.record(model_path);
    run.write_json("report.json", &report_file(&outcome.report))?;
    if args.trace && !outcome.trace.is_empty() {
        run.write_csv("trace.csv", &outcome.trace)?;
    }

    let r = &outcome.report;
    println!(
        "{} on {}: MAE {:.3e}  mean {:.6} / {:.6}  CV {:.6} / {:.6}",
        r.method, r.target, r.mae, r.real.mean, r.approx.mean, r.real.cv, r.approx.cv
    );
    run.finish(args, &config, Some(config.seed))
}

fn eval_grid(args: &EvalArgs) -> Result<Vec<f64>> {
    let valid = args.steps > 0 && args.from >= 0.0 && args.to >= args.from;
    if !valid {
        bail!(Error::InvalidParameter("grid needs 0 <= from <= to and steps >= 1".into()));
    }
    if args.steps == 1 {
        return Ok(vec![args.from]);
    }
    let m = (args.steps - 1) as f64;
    Ok(match args.grid {
        GridKind::Linear => (0..args.steps).map(|i| args.from + (args.to - args.from) * i as f64 / m).collect(),
        GridKind::Log => {
            if args.from <= 0.0 {
                bail!(Error::InvalidParameter("log grid needs from > 0".into()));
            }
            (0..args.steps).map(|i| args.from * (args.to / args.from).powf(i as f64 / m)).collect()
        }
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let stored = load_model(&args.model)?;
    let target = stored.meta.target().transpose()?;
    let xs = eval_grid(args)?;
    let mut run = Run::start("eval", &args.out, vec![args.model.clone()])?;

    let path = run.path("eval.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["x", "model_pdf", "model_cdf", "model_ccdf"];
    if target.is_some() {
        header.extend(["target_pdf", "target_cdf", "target_ccdf"]);
    }
    w.write_record(&header)?;
    let m = &stored.model;
    for &x in &xs {
        let mut row = vec![x, m.pdf(x)?, m.cdf(x)?, m.ccdf(x)?];
        if let Some(t) = &target {
            row.extend([t.pdf(x)?, t.cdf(x)?, t.ccdf(x)?]);
        }
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    run.record(path);
    println!("{} rows written to {}", xs.len(), run.path("eval.csv").display());
    run.finish(args, &xs.len(), None)
}

#[derive(Serialize)]
struct CompareRow {
    method: FitMethod,
    mae: Option<f64>,
    body_mae: Option<f64>,
    tail_mae: Option<f64>,
    mean_real: Option<f64>,
    mean_approx: Option<f64>,
    cv_real: Option<f64>,
    cv_approx: Option<f64>,
    error: Option<String>,
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    if args.methods.is_empty() {
        bail!(Error::InvalidParameter("at least one method is required".into()));
    }
    let target = args.target.build()?;
    let base = args.settings.config(FitMethod::BphHe)?;
    let mut run = Run::start("compare", &args.out, args.target.inputs())?;
    let methods: Vec<FitMethod> = args.methods.iter().map(|&m| m.into()).collect();

    let rows: Vec<CompareRow> = compare(&target, &methods, &base)
        .into_iter()
        .map(|(method, r)| match r {
            Ok(r) => CompareRow {
                method,
                mae: Some(r.mae),
                body_mae: Some(r.body_mae),
                tail_mae: r.tail_mae,
                mean_real: Some(r.real.mean),
                mean_approx: Some(r.approx.mean),
                cv_real: Some(r.real.cv),
                cv_approx: Some(r.approx.cv),
                error: None,
            },
            Err(e) => CompareRow {
                method,
                mae: None,
                body_mae: None,
                tail_mae: None,
                mean_real: None,
                mean_approx: None,
                cv_real: None,
                cv_approx: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    println!("{:<8} {:>12} {:>12} {:>12} {:>12} {:>12}", "method", "MAE", "mean real", "mean approx", "CV real", "CV approx");
    for r in &rows {
        match &r.error {
            None => println!(
                "{:<8} {:>12.3e} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
                r.method.name(),
                r.mae.unwrap_or(f64::NAN),
                r.mean_real.unwrap_or(f64::NAN),
                r.mean_approx.unwrap_or(f64::NAN),
                r.cv_real.unwrap_or(f64::NAN),
                r.cv_approx.unwrap_or(f64::NAN)
            ),
            Some(e) => println!("{:<8} failed: {e}", r.method.name()),
        }
    }
    run.write_csv("compare.csv", &rows)?;
    run.finish(args, &base, Some(base.seed))
}

#[derive(Serialize)]
struct QueueOutput {
    service_mean: f64,
    scaled_to_mean: Option<f64>,
    metrics: QueueMetrics,
    queue_length: Option<QueueLengthSummary>,
}

#[derive(Serialize)]
struct QueueLengthSummary {
    n_max: usize,
    tail_mass: f64,
    mean: f64,
    spectral_radius: f64,
    r_residual: f64,
}

impl QueueLengthSummary {
    fn new(d: &QueueLengthDist) -> Self {
        QueueLengthSummary {
            n_max: d.probabilities.len() - 1,
            tail_mass: d.tail_mass,
            mean: d.mean,
            spectral_radius: d.spectral_radius,
            r_residual: d.r_residual,
        }
    }
}

#[derive(Serialize)]
struct CurvePoint {
    x: f64,
    ccdf: f64,
}

#[derive(Serialize)]
struct LengthPoint {
    n: usize,
    probability: f64,
}

pub fn cmd_queue(args: &QueueArgs) -> Result<()> {
    let mut stored = load_model(&args.model)?;
    if let Some(mean) = args.adjust_mean {
        stored.model = stored.model.scale_to_mean(mean)?;
        stored.meta.scaled_to_mean = Some(mean);
    }
    let metrics = mph1_metrics(args.lambda, &stored.model)?;
    let mut run = Run::start("queue", &args.out, vec![args.model.clone()])?;

    if args.adjust_mean.is_some() {
        let path = run.path("service_model.json");
        stored.save(&path)?;
        run.record(path);
    }
    if let Some(grid) = args.wait_grid {
        let w = waiting_time_distribution(args.lambda, &stored.model)?;
        let rows = grid
            .points()
            .into_iter()
            .map(|x| Ok(CurvePoint { x, ccdf: w.ccdf(x)? }))
            .collect::<Result<Vec<_>>>()?;
        run.write_csv("wait.csv", rows)?;
    }
    let mut summary = None;
    if let Some(n_max) = args.qlen_max {
        let d = queue_length_dist(args.lambda, &stored.model, n_max)?;
        run.write_csv(
            "qlen.csv",
            d.probabilities.iter().enumerate().map(|(n, &probability)| LengthPoint { n, probability }),
        )?;
        summary = Some(QueueLengthSummary::new(&d));
    }
    let output = QueueOutput {
        service_mean: stored.model.mean()?,
        scaled_to_mean: args.adjust_mean,
        metrics,
        queue_length: summary,
    };
    run.write_json("metrics.json", &output)?;
    println!(
        "rho {:.6}  E_S {:.6}  E_W {:.6}  E_T {:.6}  E_N {:.6}  E_Nq {:.6}",
        metrics.rho, metrics.e_s, metrics.e_w, metrics.e_t, metrics.e_n, metrics.e_nq
    );
    run.finish(args, &output.scaled_to_mean, None)
}

#[derive(Serialize)]
struct WaitEstimate {
    x: f64,
    mean: f64,
    half_width: f64,
}

#[derive(Serialize)]
struct LengthEstimate {
    n: usize,
    mean: f64,
    half_width: f64,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut inputs = args.target.inputs();
    let service: Box<dyn ServiceSampler> = match &args.model {
        Some(path) => {
            inputs.push(path.clone());
            Box::new(load_model(path)?.model.sampler()?)
        }
        None => {
            let target: TargetDistribution = args.target.build()?;
            Box::new(target_sampler(&target))
        }
    };
    let config = SimConfig {
        lambda: args.lambda,
        jobs: args.jobs,
        warmup: args.warmup,
        seed: args.seed,
        replications: args.replications,
        wait_grid: args.wait_grid.map(|g| g.points()).unwrap_or_default(),
        qlen_max: args.qlen_max,
    };
    config.validate()?;
    let mut run = Run::start("simulate", &args.out, inputs)?;
    let result = run_mg1(&config, service.as_ref())?;
    if result.unstable {
        warn!("estimated utilization {:.4} >= 1; the queue is not stable", result.rho.mean);
    }
    run.write_json("sim.json", &result)?;
    if !result.wait_ccdf.is_empty() {
        run.write_csv(
            "wait.csv",
            result.wait_ccdf.iter().map(|(x, e)| WaitEstimate { x: *x, mean: e.mean, half_width: e.half_width }),
        )?;
    }
    run.write_csv(
        "qlen.csv",
        result.qlen.iter().enumerate().map(|(n, e)| LengthEstimate { n, mean: e.mean, half_width: e.half_width }),
    )?;
    println!(
        "rho {:.6} +/- {:.6}  E_W {:.6} +/- {:.6}  E_N {:.6} +/- {:.6}",
        result.rho.mean, result.rho.half_width, result.e_w.mean, result.e_w.half_width, result.e_n.mean, result.e_n.half_width
    );
    run.finish(args, &config, Some(config.seed))
}
