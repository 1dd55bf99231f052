//! Subcommand bodies. Each returns the process exit code on success.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use milp_decomp::certificates::{self, Certificate, CertificateError};
use milp_decomp::coordinator::{
    self, Mode, RunOptions, RunTrace, StopRule, DEFAULT_ENUMERATION_LIMIT,
};
use milp_decomp::export::{self, SummaryDocument};
use milp_decomp::milp::{self, MilpOptions, MilpResult};
use milp_decomp::model::{self, CoupledInstance, StepSchedule};
use milp_decomp::pev::{self, PevConfig, SweepOptions, TrialRecord, PARAMETER_SOURCE};
use milp_decomp::tightening;
use serde::Serialize;

use crate::args::{
    BenchmarkArgs, CertifyArgs, CompareArgs, GenerateArgs, InputArgs, ModeArg, OracleArgs,
    SolveArgs, StepArgs,
};
use crate::error::CliError;
use crate::{EXIT_NO_FEASIBLE, EXIT_OK};

struct Loaded {
    instance: CoupledInstance,
    pev: Option<PevConfig>,
}

fn read_pev_config(path: &Path, seed: Option<u64>) -> Result<PevConfig, CliError> {
    let config_err = |message: String| CliError::Config {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| config_err(e.to_string()))?;
    let mut cfg: PevConfig = serde_json::from_str(&text).map_err(|e| config_err(e.to_string()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load(input: &InputArgs) -> Result<Loaded, CliError> {
    match (&input.source.instance, &input.source.pev_config) {
        (Some(path), _) => Ok(Loaded {
            instance: model::load_instance(path)?,
            pev: None,
        }),
        (None, Some(path)) => {
            let cfg = read_pev_config(path, input.seed)?;
            Ok(Loaded {
                instance: pev::generate(&cfg)?,
                pev: Some(cfg),
            })
        }
        (None, None) => Err(CliError::Usage(
            "one of --instance or --pev-config is required".into(),
        )),
    }
}

fn schedule(step: &StepArgs, loaded: &Loaded) -> Result<StepSchedule, CliError> {
    let default = match &loaded.pev {
        Some(cfg) => pev::suggested_schedule(cfg, &loaded.instance),
        None => StepSchedule::default_for(&loaded.instance),
    };
    Ok(StepSchedule::power(
        step.a0.unwrap_or(default.a0),
        step.exponent,
    )?)
}

fn stop_rule(step: &StepArgs) -> Result<StopRule, CliError> {
    Ok(StopRule::new(step.stop_window, step.max_iter)?)
}

fn run_options(step: &StepArgs, loaded: &Loaded, parallel: bool) -> Result<RunOptions, CliError> {
    let mut opts = RunOptions::new(schedule(step, loaded)?, stop_rule(step)?);
    opts.parallel = parallel;
    Ok(opts)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable output");
    fs::write(path, text + "\n").map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Serialize)]
struct OracleDocument<'a> {
    instance: &'a str,
    fingerprint: String,
    status: &'static str,
    optimum: Option<f64>,
    x: Option<Vec<Vec<f64>>>,
    nodes: usize,
}

fn oracle_document<'a>(instance: &'a CoupledInstance, res: &MilpResult) -> OracleDocument<'a> {
    let optimal = res.is_optimal();
    OracleDocument {
        instance: instance.name(),
        fingerprint: instance.fingerprint(),
        status: if optimal { "optimal" } else { "infeasible" },
        optimum: optimal.then_some(res.value),
        x: optimal.then(|| milp::split_stacked(instance, &res.x)),
        nodes: res.nodes,
    }
}

fn solve_exact(instance: &CoupledInstance, opts: &MilpOptions) -> Result<MilpResult, CliError> {
    Ok(milp::solve_monolithic_enumerated(
        instance,
        DEFAULT_ENUMERATION_LIMIT,
        opts,
    )?)
}

/// Baseline details added to summary.json in baseline mode.
#[derive(Serialize)]
struct BaselineInfo {
    rho_tilde: Vec<f64>,
    feasible: bool,
    dual_converged: bool,
    hull_columns: usize,
    hull_rounds: usize,
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    #[serde(flatten)]
    run: SummaryDocument<'a>,
    optimum: Option<f64>,
    baseline: Option<BaselineInfo>,
    parameter_source: Option<&'static str>,
}

/// summary.json when the worst-case tightening leaves nothing to solve.
#[derive(Serialize)]
struct BaselineFailure<'a> {
    instance: &'a str,
    fingerprint: String,
    mode: &'static str,
    schedule: StepSchedule,
    stop: StopRule,
    settled: Option<usize>,
    k_feasible: Option<usize>,
    final_cost: Option<f64>,
    final_feasible: bool,
    best_feasible_cost: Option<f64>,
    baseline_failed: bool,
    hull_residual: f64,
    rho_tilde: Vec<f64>,
    certificate: Option<Certificate>,
    certificate_absent_reason: String,
    optimum: Option<f64>,
}

fn mode_name(mode: ModeArg) -> &'static str {
    match mode {
        ModeArg::Alg1 => "alg1",
        ModeArg::Alg2 => "alg2",
        ModeArg::Baseline => "baseline",
    }
}

fn check_solve_flags(args: &SolveArgs) -> Result<(), CliError> {
    match (args.mode, args.budget) {
        (ModeArg::Alg2, None) => {
            return Err(CliError::Usage("--mode alg2 requires --budget".into()));
        }
        (ModeArg::Alg1 | ModeArg::Baseline, Some(_)) => {
            return Err(CliError::Usage(
                "--budget applies to --mode alg2 only".into(),
            ));
        }
        _ => {}
    }
    if args.wall_clock.is_some() && args.mode != ModeArg::Alg2 {
        return Err(CliError::Usage(
            "--wall-clock applies to --mode alg2 only".into(),
        ));
    }
    Ok(())
}

pub fn solve(args: &SolveArgs, parallel: bool) -> Result<i32, CliError> {
    check_solve_flags(args)?;
    let loaded = load(&args.input)?;
    let inst = &loaded.instance;
    let mut opts = run_options(&args.step, &loaded, parallel)?;
    if let (ModeArg::Alg2, Some(budget)) = (args.mode, args.budget) {
        opts.mode = Mode::BestFeasible {
            budget,
            wall_clock_s: args.wall_clock,
        };
    }
    create_dir(&args.out)?;

    let optimum = if args.oracle {
        let res = solve_exact(inst, &opts.milp)?;
        write_json(&args.out.join("oracle.json"), &oracle_document(inst, &res))?;
        res.is_optimal().then_some(res.value)
    } else {
        None
    };
    let needs_worst = args.certify || args.mode == ModeArg::Baseline;
    let worst = if needs_worst {
        Some(tightening::worst_case(inst)?)
    } else {
        None
    };

    let (trace, baseline): (RunTrace, Option<BaselineInfo>) = match args.mode {
        ModeArg::Alg1 | ModeArg::Alg2 => (coordinator::run(inst, &opts)?, None),
        ModeArg::Baseline => {
            let worst = worst.as_ref().expect("computed for baseline");
            match certificates::baseline_recover_with(inst, &opts, worst) {
                Ok(out) => {
                    let info = BaselineInfo {
                        rho_tilde: out.rho_tilde,
                        feasible: out.feasible,
                        dual_converged: out.dual_converged,
                        hull_columns: out.hull.columns,
                        hull_rounds: out.hull.rounds,
                    };
                    (out.trace, Some(info))
                }
                Err(CertificateError::BaselineInfeasible { residual }) => {
                    let doc = BaselineFailure {
                        instance: inst.name(),
                        fingerprint: inst.fingerprint(),
                        mode: "baseline",
                        schedule: opts.schedule,
                        stop: opts.stop,
                        settled: None,
                        k_feasible: None,
                        final_cost: None,
                        final_feasible: false,
                        best_feasible_cost: None,
                        baseline_failed: true,
                        hull_residual: residual,
                        rho_tilde: worst.rho_tilde.clone(),
                        certificate: None,
                        certificate_absent_reason: CertificateError::BaselineInfeasible {
                            residual,
                        }
                        .to_string(),
                        optimum,
                    };
                    write_json(&args.out.join("summary.json"), &doc)?;
                    eprintln!("baseline infeasible: tightened convexified problem has no point");
                    return Ok(EXIT_NO_FEASIBLE);
                }
                Err(e) => return Err(e.into()),
            }
        }
    };

    let trace_path = args.out.join("trace.csv");
    export::write_trace_csv(&trace, create(&trace_path)?).map_err(csv_err(&trace_path))?;

    let certificate = match &worst {
        Some(worst) if args.certify => {
            match certificates::build_certificate_with(&trace, inst, optimum, worst, &opts.milp) {
                Ok(c) => Ok(c),
                Err(CertificateError::NotSettled) => Err(CertificateError::NotSettled.to_string()),
                Err(e) => return Err(e.into()),
            }
        }
        _ => Err("not requested".to_string()),
    };
    let summary = SolveSummary {
        run: SummaryDocument::new(
            inst,
            mode_name(args.mode),
            &trace,
            certificate.as_ref().map_err(Clone::clone),
        ),
        optimum,
        baseline,
        parameter_source: loaded.pev.as_ref().map(|_| PARAMETER_SOURCE),
    };
    write_json(&args.out.join("summary.json"), &summary)?;

    let s = &trace.summary;
    let found = match args.mode {
        ModeArg::Alg2 => s.best.is_some(),
        ModeArg::Alg1 | ModeArg::Baseline => s.final_feasible,
    };
    println!(
        "{}: {} iterations, termination {:?}, final cost {}, feasible {}",
        inst.name(),
        s.iterations,
        s.termination,
        s.final_cost,
        s.final_feasible
    );
    if let Some(best) = &s.best {
        println!("best feasible cost {} at k = {}", best.cost, best.found_at);
    }
    if let Ok(c) = &certificate {
        println!("certificate bound {:?}", c.bound_new);
    }
    Ok(if found { EXIT_OK } else { EXIT_NO_FEASIBLE })
}

pub fn certify(args: &CertifyArgs, parallel: bool) -> Result<i32, CliError> {
    solve(
        &SolveArgs {
            input: args.input.clone(),
            step: args.step.clone(),
            mode: ModeArg::Alg1,
            budget: None,
            wall_clock: None,
            certify: true,
            oracle: args.oracle,
            out: args.out.clone(),
        },
        parallel,
    )
}

#[derive(Serialize)]
struct CompareDocument<'a> {
    instance: &'a str,
    fingerprint: String,
    schedule: StepSchedule,
    stop: StopRule,
    report: pev::ComparisonReport,
    parameter_source: Option<&'static str>,
}

pub fn compare(args: &CompareArgs, parallel: bool) -> Result<i32, CliError> {
    let loaded = load(&args.input)?;
    let inst = &loaded.instance;
    let opts = run_options(&args.step, &loaded, parallel)?;
    create_dir(&args.out)?;
    let report = pev::compare(inst, &opts)?;
    println!(
        "rho: adaptive {} worst-case {}; delta_rho_pct {:?}; delta_j_pct {:?}; baseline_failed {}",
        report.rho_bar_inf,
        report.rho_tilde_inf,
        report.delta_rho_pct,
        report.delta_j_pct,
        report.baseline_failed
    );
    let code = if report.alg1_feasible {
        EXIT_OK
    } else {
        EXIT_NO_FEASIBLE
    };
    write_json(
        &args.out.join("report.json"),
        &CompareDocument {
            instance: inst.name(),
            fingerprint: inst.fingerprint(),
            schedule: opts.schedule,
            stop: opts.stop,
            report,
            parameter_source: loaded.pev.as_ref().map(|_| PARAMETER_SOURCE),
        },
    )?;
    Ok(code)
}

fn write_histograms(
    out: &Path,
    suffix: &str,
    records: &[&TrialRecord],
    bins: usize,
) -> Result<(), CliError> {
    let metrics: [(&str, fn(&TrialRecord) -> Option<f64>); 4] = [
        ("delta_rho", |r| r.delta_rho_pct),
        ("delta_j", |r| r.delta_j_pct),
        ("alg1_gap", |r| r.alg1_gap_pct),
        ("alg2_gap", |r| r.alg2_gap_pct),
    ];
    for (name, get) in metrics {
        let values: Vec<f64> = records.iter().filter_map(|r| get(r)).collect();
        if values.is_empty() {
            continue;
        }
        let path = out.join(format!("hist_{name}{suffix}.csv"));
        export::write_histogram_csv(&pev::histogram(&values, bins), create(&path)?)
            .map_err(csv_err(&path))?;
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn benchmark(args: &BenchmarkArgs, parallel: bool) -> Result<i32, CliError> {
    let base = read_pev_config(&args.pev_config, args.seed)?;
    let fleet_sizes = if args.m.is_empty() {
        vec![base.m]
    } else {
        args.m.clone()
    };
    let opts = SweepOptions {
        trials: args.trials,
        stop: stop_rule(&args.step)?,
        a0: args.step.a0,
        exponent: args.step.exponent,
        oracle: args.oracle,
        alg2_budget: args.budget,
        parallel,
        timing: args.timing,
        bins: args.bins,
    };
    create_dir(&args.out)?;
    let mut all = Vec::new();
    for &m in &fleet_sizes {
        let cfg = base.with_m(m);
        cfg.validate()?;
        let records = pev::sweep(&cfg, &opts);
        let failed = records.iter().filter(|r| r.baseline_failed).count();
        let errors = records.iter().filter(|r| r.error.is_some()).count();
        println!(
            "m = {m}: {} trials, mean delta_rho_pct {:?}, mean delta_j_pct {:?}, baseline failed {failed}, errors {errors}",
            records.len(),
            mean(records.iter().filter_map(|r| r.delta_rho_pct)),
            mean(records.iter().filter_map(|r| r.delta_j_pct)),
        );
        for r in records
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| (r.trial, e)))
        {
            eprintln!("trial {}: {}", r.0, r.1);
        }
        all.extend(records);
    }
    let sweep_path = args.out.join("sweep.csv");
    export::write_sweep_csv(&all, create(&sweep_path)?).map_err(csv_err(&sweep_path))?;
    if fleet_sizes.len() == 1 {
        let refs: Vec<&TrialRecord> = all.iter().collect();
        write_histograms(&args.out, "", &refs, args.bins)?;
    } else {
        for &m in &fleet_sizes {
            let refs: Vec<&TrialRecord> = all.iter().filter(|r| r.m == m).collect();
            write_histograms(&args.out, &format!("_m{m}"), &refs, args.bins)?;
        }
    }
    write_json(&args.out.join("records.json"), &all)?;
    Ok(EXIT_OK)
}

pub fn oracle(args: &OracleArgs) -> Result<i32, CliError> {
    let loaded = load(&args.input)?;
    let inst = &loaded.instance;
    let opts = MilpOptions {
        node_limit: args.node_limit,
        ..MilpOptions::default()
    };
    create_dir(&args.out)?;
    let res = solve_exact(inst, &opts)?;
    write_json(&args.out.join("oracle.json"), &oracle_document(inst, &res))?;
    if res.is_optimal() {
        println!(
            "{}: optimum {} ({} nodes)",
            inst.name(),
            res.value,
            res.nodes
        );
        Ok(EXIT_OK)
    } else {
        println!("{}: infeasible ({} nodes)", inst.name(), res.nodes);
        Ok(EXIT_NO_FEASIBLE)
    }
}

pub fn generate(args: &GenerateArgs) -> Result<i32, CliError> {
    let cfg = read_pev_config(&args.pev_config, args.seed)?;
    let inst = pev::generate(&cfg)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    model::save_instance(&inst, &args.out).map_err(|source| CliError::Io {
        path: PathBuf::from(&args.out),
        source,
    })?;
    println!("{} {}", inst.name(), inst.fingerprint());
    Ok(EXIT_OK)
}
