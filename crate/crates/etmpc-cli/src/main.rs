//! Batch front-end: loads scenario configs, runs adaptive/static/periodic
//! comparisons, and writes CSV series plus metric reports per mode.
//!
//! Exit codes: 0 success, 2 config error, 3 solver failure, 4 golden
//! mismatch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use etmpc::analysis::{self, Trajectory};
use etmpc::config::ScenarioFile;
use etmpc::controller::{self, EtmMode, Scenario};
use etmpc::lmi::LmiProblem;
use etmpc::Error;

#[derive(Parser)]
#[command(
    name = "etmpc",
    about = "Adaptive event-triggered robust MPC: closed-loop runs, mode comparisons, reports"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the closed loop for one or more triggering modes and write
    /// trajectory CSVs, metric reports and plot-ready series.
    Run(RunArgs),
    /// Check a scenario file's parameter ranges, dimensions and
    /// disturbance budget; print one pass/fail line per check.
    Validate {
        /// Scenario file to check.
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Modes to run: adaptive, static, periodic (comma-separated).
    #[arg(long, value_delimiter = ',', required = true)]
    mode: Vec<String>,
    /// Output directory; one subdirectory per mode.
    #[arg(long)]
    out: PathBuf,
    /// Override the random seeds of the scenario's generators.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the horizon (number of simulated steps).
    #[arg(long)]
    steps: Option<usize>,
    /// Override the steady-state threshold.
    #[arg(long)]
    zeta: Option<f64>,
    /// Display sample time (steady-state time in seconds = steps * this).
    #[arg(long)]
    sample_time: Option<f64>,
    /// Dump the assembled synthesis problem at each trigger in the sparse
    /// text format (out/<mode>/sdp/trigger_<k>.txt).
    #[arg(long)]
    dump_sdp: bool,
    /// Write the per-trigger recursive-feasibility audit (audit.csv).
    #[arg(long)]
    audit_feasibility: bool,
    /// Compare produced metrics against golden ones (dir with
    /// <mode>/metrics.txt); exit 4 on mismatch.
    #[arg(long)]
    golden_compare: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Validate { scenario } => match validate_command(&scenario) {
            Ok(all_pass) => {
                if all_pass {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(2)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Cmd::Run(args) => match run_command(&args) {
            Ok(golden_ok) => {
                if golden_ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(4)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                match e {
                    Error::Solver(_) => ExitCode::from(3),
                    _ => ExitCode::from(2),
                }
            }
        },
    }
}

fn validate_command(path: &Path) -> Result<bool, Error> {
    let file = ScenarioFile::load(path)?;
    let report = file.validation_report();
    let mut all = true;
    for c in &report {
        println!(
            "{} {} ({})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        all &= c.pass;
    }
    println!(
        "{}: {}/{} checks passed",
        path.display(),
        report.iter().filter(|c| c.pass).count(),
        report.len()
    );
    Ok(all)
}

fn run_command(args: &RunArgs) -> Result<bool, Error> {
    let modes: Vec<EtmMode> = args
        .mode
        .iter()
        .map(|m| m.parse())
        .collect::<Result<_, _>>()?;
    if modes.is_empty() {
        return Err(Error::Config("no modes selected".into()));
    }
    let mut file = ScenarioFile::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        file.reseed(seed);
    }
    if let Some(steps) = args.steps {
        file.steps = steps;
    }
    if let Some(zeta) = args.zeta {
        file.zeta = zeta;
    }
    if let Some(st) = args.sample_time {
        file.sample_time = st;
    }
    let scenario = file.build()?;

    std::fs::create_dir_all(&args.out)?;
    // Modes are independent given the same scenario; run them concurrently,
    // each writing into its own subdirectory.
    let results: Vec<Result<(EtmMode, BTreeMap<String, String>), Error>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = modes
                .iter()
                .map(|mode| {
                    let scenario = &scenario;
                    scope.spawn(move || {
                        let traj = controller::run_with_mode(scenario, *mode)?;
                        let mode_dir = args.out.join(mode.as_str());
                        std::fs::create_dir_all(&mode_dir)?;
                        let metrics = write_mode_outputs(&mode_dir, scenario, *mode, &traj, args)?;
                        Ok((*mode, metrics))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("mode runner panicked"))
                .collect()
        });
    let mut summaries: Vec<(EtmMode, BTreeMap<String, String>)> = Vec::new();
    for r in results {
        summaries.push(r?);
    }
    write_summary(&args.out, &summaries)?;

    if let Some(golden) = &args.golden_compare {
        let mut ok = true;
        for (mode, metrics) in &summaries {
            let golden_path = golden.join(mode.as_str()).join("metrics.txt");
            match compare_against_golden(&golden_path, metrics) {
                Ok(mismatches) if mismatches.is_empty() => {
                    println!("golden match: {}", mode.as_str());
                }
                Ok(mismatches) => {
                    ok = false;
                    for m in mismatches {
                        eprintln!("golden mismatch [{}]: {m}", mode.as_str());
                    }
                }
                Err(e) => {
                    ok = false;
                    eprintln!("golden compare failed [{}]: {e}", mode.as_str());
                }
            }
        }
        return Ok(ok);
    }
    Ok(true)
}

fn write_mode_outputs(
    dir: &Path,
    scenario: &Scenario,
    mode: EtmMode,
    traj: &Trajectory,
    args: &RunArgs,
) -> Result<BTreeMap<String, String>, Error> {
    std::fs::write(dir.join("trajectory.csv"), analysis::trajectory_csv(traj))?;

    let mut triggers_csv = String::from("k,triggered\n");
    let mut beta_csv = String::from("k,beta\n");
    for s in &traj.steps {
        triggers_csv.push_str(&format!("{},{}\n", s.k, u8::from(s.triggered)));
        beta_csv.push_str(&format!("{},{}\n", s.k, s.beta));
    }
    std::fs::write(dir.join("triggers.csv"), triggers_csv)?;
    std::fs::write(dir.join("beta.csv"), beta_csv)?;

    let mut gamma_csv = String::from("k,gamma\n");
    for t in &traj.triggers {
        gamma_csv.push_str(&format!("{},{}\n", t.k, t.gamma));
    }
    std::fs::write(dir.join("gamma.csv"), gamma_csv)?;

    let mut gains_csv = String::from("k,normF,normPhi\n");
    for (k, nf, np) in analysis::gain_norm_series(traj) {
        gains_csv.push_str(&format!("{k},{nf},{np}\n"));
    }
    std::fs::write(dir.join("gains.csv"), gains_csv)?;

    let stats = analysis::trigger_statistics(traj)?;
    let mut hist_csv = String::from("interval,count\n");
    for (iv, n) in &stats.histogram {
        hist_csv.push_str(&format!("{iv},{n}\n"));
    }
    std::fs::write(dir.join("intervals_hist.csv"), hist_csv)?;

    if args.audit_feasibility {
        let mut audit_csv = String::from("k,state_bound_min_eig,static_min_eig,pass\n");
        for t in &traj.triggers {
            if let Some(a) = &t.audit {
                audit_csv.push_str(&format!(
                    "{},{},{},{}\n",
                    t.k,
                    a.state_bound_min_eig,
                    a.static_min_eig,
                    u8::from(a.pass)
                ));
            }
        }
        std::fs::write(dir.join("audit.csv"), audit_csv)?;
    }

    if args.dump_sdp {
        let sdp_dir = dir.join("sdp");
        std::fs::create_dir_all(&sdp_dir)?;
        for t in &traj.triggers {
            let problem = LmiProblem::assemble(
                &scenario.model,
                &scenario.cost,
                scenario.etm.theta,
                scenario.etm.mu,
                &traj.buffer_at(t.k)?,
                traj.steps[t.k].beta,
            )?;
            std::fs::write(
                sdp_dir.join(format!("trigger_{:04}.txt", t.k)),
                problem.dump_sparse(),
            )?;
        }
    }

    let metrics = collect_metrics(scenario, mode, traj)?;
    let mut text = String::new();
    for (k, v) in &metrics {
        text.push_str(&format!("{k} = {v}\n"));
    }
    std::fs::write(dir.join("metrics.txt"), text)?;
    Ok(metrics)
}

fn collect_metrics(
    scenario: &Scenario,
    mode: EtmMode,
    traj: &Trajectory,
) -> Result<BTreeMap<String, String>, Error> {
    let stats = analysis::trigger_statistics(traj)?;
    let k_s = analysis::steady_state_time(traj, scenario.zeta)?;
    let residuals = analysis::check_decrease_condition(traj, &scenario.cost, None)?;
    let max_res_rel = residuals
        .iter()
        .map(|r| r.residual / (1.0 + r.v_k))
        .fold(f64::NEG_INFINITY, f64::max);
    let memberships = analysis::check_invariant_set(traj, 1e-6)?;
    let beta_min = traj
        .steps
        .iter()
        .map(|s| s.beta)
        .fold(f64::INFINITY, f64::min);
    let audit_total = traj.triggers.iter().filter(|t| t.audit.is_some()).count();
    let audit_pass = traj
        .triggers
        .iter()
        .filter_map(|t| t.audit.as_ref())
        .filter(|a| a.pass)
        .count();
    let sat_margin = traj
        .steps
        .iter()
        .map(|s| s.h_row_max / scenario.model.u_sat)
        .fold(0.0_f64, f64::max);
    let iters: usize = traj.triggers.iter().map(|t| t.diagnostics.iterations).sum();

    let mut m = BTreeMap::new();
    m.insert("mode".into(), mode.as_str().to_string());
    m.insert("steps".into(), traj.steps.len().to_string());
    m.insert("trigger_count".into(), stats.count.to_string());
    m.insert("trigger_ratio".into(), format!("{}", stats.ratio));
    m.insert(
        "average_interval".into(),
        stats
            .average_interval
            .map(|v| format!("{v}"))
            .unwrap_or_else(|| "-".into()),
    );
    m.insert(
        "k_s_steps".into(),
        k_s.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
    );
    m.insert(
        "k_s_time".into(),
        k_s.map(|v| format!("{}", v as f64 * scenario.sample_time))
            .unwrap_or_else(|| "-".into()),
    );
    m.insert("beta_min".into(), format!("{beta_min}"));
    m.insert("max_decrease_residual_rel".into(), format!("{max_res_rel}"));
    m.insert(
        "invariant_membership_ok".into(),
        memberships.iter().all(|c| c.pass).to_string(),
    );
    m.insert("audit_pass_count".into(), audit_pass.to_string());
    m.insert("audit_total".into(), audit_total.to_string());
    m.insert("certified".into(), traj.certified.to_string());
    m.insert(
        "gamma_first".into(),
        format!("{}", traj.triggers.first().map(|t| t.gamma).unwrap_or(f64::NAN)),
    );
    m.insert(
        "gamma_last".into(),
        format!("{}", traj.triggers.last().map(|t| t.gamma).unwrap_or(f64::NAN)),
    );
    m.insert("sat_row_margin_max".into(), format!("{sat_margin}"));
    m.insert("solver_iterations_total".into(), iters.to_string());
    Ok(m)
}

fn write_summary(
    out: &Path,
    summaries: &[(EtmMode, BTreeMap<String, String>)],
) -> Result<(), Error> {
    let mut text = String::new();
    let col = 18;
    text.push_str(&format!("{:<28}", "Metric"));
    for (mode, _) in summaries {
        text.push_str(&format!("{:>col$}", mode.as_str()));
    }
    text.push('\n');
    enum Fmt {
        Percent,
        Fixed,
        Raw,
        Sci,
    }
    let rows: [(&str, &str, Fmt); 4] = [
        ("Triggering ratio", "trigger_ratio", Fmt::Percent),
        ("Average interval (steps)", "average_interval", Fmt::Fixed),
        ("Steady-state time k_s", "k_s_steps", Fmt::Raw),
        ("Final cost bound gamma*", "gamma_last", Fmt::Sci),
    ];
    for (label, key, fmt) in rows {
        text.push_str(&format!("{label:<28}"));
        for (_, m) in summaries {
            let raw = m.get(key).cloned().unwrap_or_else(|| "-".into());
            let shown = match fmt {
                Fmt::Percent => raw
                    .parse::<f64>()
                    .map(|v| format!("{:.2}%", v * 100.0))
                    .unwrap_or(raw),
                Fmt::Fixed => raw.parse::<f64>().map(|v| format!("{v:.2}")).unwrap_or(raw),
                Fmt::Sci => raw.parse::<f64>().map(|v| format!("{v:.3e}")).unwrap_or(raw),
                Fmt::Raw => raw,
            };
            text.push_str(&format!("{shown:>col$}"));
        }
        text.push('\n');
    }
    print!("{text}");
    std::fs::write(out.join("summary.txt"), text)?;
    Ok(())
}

/// Compare produced metrics against a golden metrics file. Integers match
/// exactly, floats within 1e-9 + 1e-6 relative, strings exactly.
fn compare_against_golden(
    golden_path: &Path,
    produced: &BTreeMap<String, String>,
) -> Result<Vec<String>, Error> {
    let text = std::fs::read_to_string(golden_path).map_err(|e| {
        Error::Config(format!("cannot read golden '{}': {e}", golden_path.display()))
    })?;
    let mut mismatches = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, want)) = line.split_once('=') else {
            continue;
        };
        let key = key.trim();
        let want = want.trim();
        let Some(got) = produced.get(key) else {
            mismatches.push(format!("missing metric '{key}'"));
            continue;
        };
        let equal = match (want.parse::<f64>(), got.parse::<f64>()) {
            (Ok(w), Ok(g)) => (w - g).abs() <= 1e-9 + 1e-6 * w.abs(),
            _ => want == got,
        };
        if !equal {
            mismatches.push(format!("{key}: golden {want}, produced {got}"));
        }
    }
    Ok(mismatches)
}
