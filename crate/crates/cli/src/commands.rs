use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use bayesdose_api::{router, SubmitOutcomes, TrialStore};
use bayesdose_core::design::{DesignConfig, Mode, Outcome};
use bayesdose_core::harness::{calibrate_delta, check_compatible, run_mc, McOptions, McResult};
use bayesdose_core::scenarios::{ScenarioSpec, ValidationReport};
use bayesdose_core::HarnessError;
use serde::{Deserialize, Serialize};

use crate::args::{CalibrateArgs, MonteCarloArgs, ServeArgs, SimulateArgs, StoreArgs, TrialCommand, ValidateArgs};
use crate::{Failure, Usage};

type Result<T = ()> = std::result::Result<T, Failure>;

struct Prepared {
    spec: ScenarioSpec,
    design: DesignConfig,
    options: McOptions,
    out: PathBuf,
}

fn prepare(mc: &MonteCarloArgs) -> Result<Prepared> {
    let spec = ScenarioSpec::resolve(&mc.scenario).map_err(|e| Usage(e.to_string()))?;
    let design = mc.design.resolve(spec.covariates)?;
    check_compatible(&spec, &design).map_err(|e| Usage(e.to_string()))?;
    let label = mc.label.clone().unwrap_or_else(|| mc.design.label().to_string());
    let out = mc
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-{label}", spec.name)));
    let options = McOptions {
        label,
        replicates: mc.reps as usize,
        seed: mc.seed,
        metric_draws: mc.metric_draws as usize,
    };
    Ok(Prepared {
        spec,
        design,
        options,
        out,
    })
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn harness(e: HarnessError) -> Failure {
    match e {
        HarnessError::InvalidArgument(m) => Failure::Usage(Usage(m)),
        other => runtime(other),
    }
}

fn print_summary(res: &McResult, out: &Path) {
    let s = &res.summary;
    let f = &s.final_;
    println!(
        "{} / {}: {} of {} replicates succeeded",
        s.scenario, s.design, s.succeeded, s.replicates
    );
    println!(
        "expected n {:.2}, expected unique doses {:.2}, stopped early {:.1}%",
        f.expected_n,
        f.expected_unique_doses,
        100.0 * f.stopped_early_fraction
    );
    for (k, n) in f.expected_stratum_n.iter().enumerate() {
        if let Some(last) = s.last(k) {
            let du = last
                .mean_dose_units
                .map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
            println!(
                "  stratum {k} {:?}: n {n:.2}, dose units {du}, rpsel {:.4}, abs dev {:.4}",
                last.covariates, last.mean_rpsel, last.mean_abs_dev
            );
        }
    }
    println!("wrote {}", out.display());
}

pub fn simulate(args: SimulateArgs) -> Result {
    let p = prepare(&args.mc)?;
    let res = run_mc(&p.spec, &p.design, &p.options).map_err(harness)?;
    res.write(&p.out).map_err(runtime)?;
    print_summary(&res, &p.out);
    Ok(())
}

pub fn calibrate(args: CalibrateArgs) -> Result {
    let p = prepare(&args.mc)?;
    let n0 = p.design.initial_n();
    for &t in &args.target_n {
        if t > p.design.max_n {
            return Err(Usage(format!("--target-n {t} exceeds --n-max {}", p.design.max_n)).into());
        }
        if t < n0 {
            return Err(Usage(format!("--target-n {t} is below the initial design size {n0}")).into());
        }
    }
    let (cal, pilot) = calibrate_delta(&p.spec, &p.design, &p.options, &args.target_n).map_err(harness)?;
    pilot.write(&p.out.join("pilot")).map_err(runtime)?;
    cal.write(&p.out).map_err(runtime)?;
    println!("iteration  n  median  q25  q75");
    for q in &cal.quantiles {
        println!(
            "{:>9} {:>3}  {:.6}  {:.6}  {:.6}",
            q.iteration, q.n, q.median, q.q25, q.q75
        );
    }
    for prop in &cal.proposals {
        println!(
            "target n {}: delta {:.6} (median at iteration {}, stopping by iteration {})",
            prop.target_n, prop.delta, prop.source_iteration, prop.target_iteration
        );
    }
    println!("wrote {}", p.out.display());
    Ok(())
}

fn fmt_point(p: &[f64]) -> String {
    format!("({}, {})", p[0], p[1])
}

fn print_report(r: &ValidationReport) {
    for s in &r.strata {
        let status = if s.problems.is_empty() { "ok" } else { "FAIL" };
        println!(
            "{:<8} stratum {} {:?}  argmin {}  min {:.4}  ses {:.3}  {status}",
            r.scenario,
            s.stratum,
            s.covariates,
            fmt_point(&s.argmin),
            s.minimum,
            s.ses
        );
        for problem in &s.problems {
            println!("    {problem}");
        }
    }
}

pub fn validate(args: ValidateArgs) -> Result {
    let specs: Vec<ScenarioSpec> = if args.scenario_file.is_empty() {
        ScenarioSpec::builtin_names()
            .map(|n| ScenarioSpec::builtin(n).map_err(runtime))
            .collect::<Result<_>>()?
    } else {
        args.scenario_file
            .iter()
            .map(|p| {
                ScenarioSpec::from_path(p)
                    .with_context(|| format!("loading {}", p.display()))
                    .map_err(Failure::Runtime)
            })
            .collect::<Result<_>>()?
    };
    let reports: Vec<ValidationReport> = specs.iter().map(|s| s.truth_report()).collect();
    let passed = reports.iter().filter(|r| r.passed()).count();
    if args.json {
        println!("{}", serde_json::to_string_pretty(&reports).map_err(runtime)?);
    } else {
        reports.iter().for_each(print_report);
        println!("{passed}/{} scenarios pass", reports.len());
    }
    if passed == reports.len() {
        Ok(())
    } else {
        let failures: Vec<String> = reports
            .iter()
            .flat_map(|r| r.failures().into_iter().map(move |f| format!("{}: {f}", r.scenario)))
            .collect();
        Err(runtime(anyhow::anyhow!(
            "scenario validation failed: {}",
            failures.join("; ")
        )))
    }
}

fn open_store(args: &StoreArgs) -> Result<TrialStore> {
    TrialStore::open(&args.data_dir)
        .with_context(|| format!("opening trial store {}", args.data_dir.display()))
        .map_err(Failure::Runtime)
}

fn print_json<T: Serialize>(value: &T) -> Result {
    println!("{}", serde_json::to_string_pretty(value).map_err(runtime)?);
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SubmissionFile {
    Bare(Vec<Outcome>),
    Full(SubmitOutcomes),
}

fn api(e: bayesdose_api::ApiError) -> Failure {
    match e {
        bayesdose_api::ApiError::InvalidRequest { message, fields } => {
            let detail: Vec<String> = fields
                .iter()
                .filter(|f| !message.contains(&f.message))
                .map(|f| format!("{}: {}", f.field, f.message))
                .collect();
            Failure::Usage(Usage(if detail.is_empty() {
                message
            } else {
                format!("{message} ({})", detail.join(", "))
            }))
        }
        other => runtime(other),
    }
}

pub fn trial(cmd: TrialCommand) -> Result {
    match cmd {
        TrialCommand::Create {
            store,
            id,
            design,
            seed,
        } => {
            let mut config = design.resolve(1)?;
            if config.mode == Mode::Standard {
                config.covariates = 0;
            }
            config.seed = seed;
            let store = open_store(&store)?;
            let state = store.create(id, config).map_err(api)?;
            print_json(&state.view().map_err(api)?)
        }
        TrialCommand::Submit { store, id, outcomes } => {
            let text = if outcomes == "-" {
                let mut s = String::new();
                std::io::stdin().read_to_string(&mut s).map_err(runtime)?;
                s
            } else {
                std::fs::read_to_string(&outcomes).map_err(|e| Usage(format!("cannot read {outcomes}: {e}")))?
            };
            let parsed: SubmissionFile =
                serde_json::from_str(&text).map_err(|e| Usage(format!("invalid outcomes file: {e}")))?;
            let (cohort_id, outcomes) = match parsed {
                SubmissionFile::Bare(o) => (None, o),
                SubmissionFile::Full(s) => (s.cohort_id, s.outcomes),
            };
            let store = open_store(&store)?;
            let sub = store.submit(&id, cohort_id, outcomes).map_err(api)?;
            print_json(&serde_json::json!({
                "duplicate": sub.duplicate,
                "progress": sub.progress,
                "trial": sub.state.view().map_err(api)?,
            }))
        }
        TrialCommand::Show { store, id } => {
            let store = open_store(&store)?;
            print_json(&store.get(&id).map_err(api)?.view().map_err(api)?)
        }
        TrialCommand::Posterior { store, id, stratum } => {
            let store = open_store(&store)?;
            print_json(&store.get(&id).map_err(api)?.posterior(stratum).map_err(api)?)
        }
        TrialCommand::Recommend { store, id } => {
            let store = open_store(&store)?;
            print_json(&store.get(&id).map_err(api)?.recommendation().map_err(api)?)
        }
    }
}

pub fn serve(args: ServeArgs) -> Result {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();
    let store = Arc::new(open_store(&args.store)?);
    tracing::info!(trials = store.ids().len(), dir = %store.root().display(), "trial store opened");
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    rt.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        axum::serve(listener, router(store.clone()))
            .with_graceful_shutdown(shutdown_signal())
            .await?;
        anyhow::Ok(())
    })?;
    store.flush().map_err(runtime)?;
    tracing::info!("trial store flushed; exiting");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
