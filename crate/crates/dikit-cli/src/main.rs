//! `dikit`: certified device-independent key rates for routed Bell tests.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 numerical or
//! verification failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dikit_core::analytic::{prop2_rate, thm1_rate, SelfTestParams};
use dikit_core::model::equivalence_check;
use dikit_core::npo::{anticom_sq_problem, sdp_selftest_battery};
use dikit_core::pipeline::{
    curve_to_csv, fmt_sig9, reference_report, run_scenario, PipelineTier, ScenarioConfig,
};
use dikit_core::stats::{
    chsh_epsilon, chsh_winning_prob, classical_chsh_max, werner_chsh_table, TSIRELSON_OMEGA,
};

#[derive(Parser)]
#[command(
    name = "dikit",
    version,
    about = "Certified device-independent key rates for routed Bell tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a key-rate curve over a qber grid and write CSV plus a JSON
    /// certificate bundle.
    Curve(CurveArgs),
    /// Print a single-point rate certificate as JSON.
    Bound(BoundArgs),
    /// CHSH diagnostics for a Werner-state local test.
    Chsh(ChshArgs),
    /// Translate random routed models and verify that statistics and the
    /// conditional entropy are preserved.
    EquivCheck(EquivArgs),
    /// Solver conformance battery (Tsirelson score, commuting cap,
    /// self-testing forcing, monotonicity).
    SdpSelftest(SelftestArgs),
}

#[derive(Args)]
struct CurveArgs {
    /// Scenario configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path; the certificate bundle lands next to it with a
    /// .certs.json suffix.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured tier (analytic | npo-eur | npo-entropy).
    #[arg(long)]
    tier: Option<String>,
    /// Worker threads for the curve points.
    #[arg(long, default_value_t = 2)]
    jobs: usize,
    /// Write the side-bound moment problems as JSON into this directory.
    #[arg(long)]
    dump_problems: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    /// Quantum bit error rate (both bases for the robust self-testing
    /// chain, key basis for the anticommutator chain).
    #[arg(long)]
    qber: f64,
    /// CHSH winning-probability deficit ε of the local self-test.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Certified anticommutator norm ‖{A,B}‖ of the key/test observables.
    #[arg(long)]
    anticom_norm: Option<f64>,
    /// Method tier: thm1 (needs --epsilon) or prop2 (needs --anticom-norm);
    /// inferred from the given flag when omitted.
    #[arg(long)]
    tier: Option<String>,
    /// Dilation constant C in δ = C·√ε.
    #[arg(long, default_value_t = 1.0)]
    delta_constant: f64,
}

#[derive(Args)]
struct ChshArgs {
    /// Werner-state visibility of the local test.
    #[arg(long, default_value_t = 0.99)]
    visibility: f64,
}

#[derive(Args)]
struct EquivArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Deliberately corrupt one model's marginal (negative-control hook).
    #[arg(long, hide = true)]
    corrupt_marginal: bool,
}

#[derive(Args)]
struct SelftestArgs {
    /// Shrink every tolerance to force failures (negative-control hook).
    #[arg(long, hide = true)]
    inject_loose_tolerance: bool,
    /// Write the battery's moment problems as JSON into this directory.
    #[arg(long)]
    dump_problems: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Curve(args) => cmd_curve(args),
        Command::Bound(args) => cmd_bound(args),
        Command::Chsh(args) => cmd_chsh(args),
        Command::EquivCheck(args) => cmd_equiv_check(args),
        Command::SdpSelftest(args) => cmd_sdp_selftest(args),
    };
    ExitCode::from(code)
}

fn fail(code: u8, msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    code
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, String> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", p.display()))
        }
    }
}

fn cmd_curve(args: CurveArgs) -> u8 {
    let mut cfg = match load_config(args.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return fail(1, e),
    };
    if let Some(tier) = &args.tier {
        cfg.tier = match tier.as_str() {
            "analytic" => PipelineTier::Analytic,
            "npo-eur" => PipelineTier::NpoEur,
            "npo-entropy" => PipelineTier::NpoEntropy,
            other => return fail(1, format!("unknown tier `{other}`")),
        };
    }
    if cfg.tier == PipelineTier::NpoEntropy && !cfg!(feature = "entropy-npo") {
        return fail(
            1,
            "tier npo-entropy requires a build with `--features entropy-npo`",
        );
    }
    if let Err(e) = cfg.resolve_grid() {
        return fail(1, e);
    }

    if let Some(dir) = &args.dump_problems {
        if let Err(e) = dump_side_problems(&cfg, dir) {
            return fail(1, e);
        }
    }

    let result = match run_scenario(&cfg, args.jobs) {
        Ok(r) => r,
        Err(e) => return fail(2, e),
    };

    let csv = curve_to_csv(&result.points);
    if let Err(e) = std::fs::write(&args.out, &csv) {
        return fail(1, format!("cannot write {}: {e}", args.out.display()));
    }
    let cert_path = args.out.with_extension("certs.json");
    let bundle = match serde_json::to_string_pretty(&result) {
        Ok(b) => b,
        Err(e) => return fail(2, format!("cannot serialize certificates: {e}")),
    };
    if let Err(e) = std::fs::write(&cert_path, bundle) {
        return fail(1, format!("cannot write {}: {e}", cert_path.display()));
    }

    // Informational comparison against the shipped reference curve.
    match reference_report(&result.points) {
        Ok(report) => {
            println!("qber        one-switch   two-switch   d(one)       d(two)");
            for row in report {
                let cell = |v: Option<f64>| match v {
                    Some(x) => format!("{x:+.6}"),
                    None => "      -  ".into(),
                };
                println!(
                    "{}  {}  {}  {}  {}",
                    fmt_sig9(row.qber),
                    cell(row.computed_one_switch),
                    cell(row.computed_two_switch),
                    cell(row.deviation_one_switch),
                    cell(row.deviation_two_switch),
                );
            }
        }
        Err(e) => eprintln!("note: reference comparison unavailable: {e}"),
    }

    eprintln!(
        "wrote {} ({} points) and {}",
        args.out.display(),
        result.points.len(),
        cert_path.display()
    );
    if result.any_failed() {
        2
    } else {
        0
    }
}

fn dump_side_problems(cfg: &ScenarioConfig, dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    for (name, v) in [
        ("alice", cfg.local_visibility_a),
        ("bob", cfg.local_visibility_b),
    ] {
        let table = werner_chsh_table(v).map_err(|e| e.to_string())?;
        let problem =
            anticom_sq_problem(&table, cfg.npa_level, true).map_err(|e| e.to_string())?;
        let path = dir.join(format!("anticom_sq_{name}.json"));
        std::fs::write(&path, problem.to_json().to_string())
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    Ok(())
}

fn cmd_bound(args: BoundArgs) -> u8 {
    let tier = match (&args.tier, args.epsilon, args.anticom_norm) {
        (_, Some(_), Some(_)) => {
            return fail(1, "--epsilon and --anticom-norm are mutually exclusive")
        }
        (_, None, None) => return fail(1, "one of --epsilon or --anticom-norm is required"),
        (Some(t), Some(_), None) if t == "thm1" => "thm1",
        (Some(t), None, Some(_)) if t == "prop2" => "prop2",
        (Some(t), _, _) => {
            return fail(
                1,
                format!("tier `{t}` conflicts with the given flag (thm1 needs --epsilon, prop2 needs --anticom-norm)"),
            )
        }
        (None, Some(_), None) => "thm1",
        (None, None, Some(_)) => "prop2",
    };
    let cert = match tier {
        "thm1" => SelfTestParams::new(args.epsilon.unwrap(), args.delta_constant)
            .and_then(|p| thm1_rate(&p, args.qber, args.qber)),
        _ => prop2_rate(args.anticom_norm.unwrap(), args.qber),
    };
    match cert {
        Ok(c) => {
            println!("{}", serde_json::to_string_pretty(&c).unwrap());
            0
        }
        Err(e) => fail(1, e),
    }
}

fn cmd_chsh(args: ChshArgs) -> u8 {
    let table = match werner_chsh_table(args.visibility) {
        Ok(t) => t,
        Err(e) => return fail(1, e),
    };
    let omega = match chsh_winning_prob(&table) {
        Ok(o) => o,
        Err(e) => return fail(2, e),
    };
    let eps = match chsh_epsilon(omega) {
        Ok(e) => e,
        Err(e) => return fail(2, e),
    };
    let out = serde_json::json!({
        "visibility": args.visibility,
        "omega": omega,
        "chsh_score": 8.0 * omega - 4.0,
        "epsilon": eps,
        "classical_omega_max": classical_chsh_max(),
        "tsirelson_omega": TSIRELSON_OMEGA,
    });
    println!("{}", serde_json::to_string_pretty(&out).unwrap());
    0
}

fn cmd_equiv_check(args: EquivArgs) -> u8 {
    if args.trials == 0 {
        return fail(1, "--trials must be at least 1");
    }
    match equivalence_check(args.trials, args.seed, args.corrupt_marginal) {
        Ok(report) => {
            println!(
                "trials {}  max statistics deviation {:.3e}  max entropy deviation {:.3e}",
                report.trials, report.max_stat_dev, report.max_entropy_dev
            );
            if report.max_stat_dev <= 1e-8 && report.max_entropy_dev <= 1e-7 {
                0
            } else {
                fail(
                    2,
                    format!(
                        "deviation beyond tolerance (seed {}): stats {:.3e}, entropy {:.3e}",
                        args.seed, report.max_stat_dev, report.max_entropy_dev
                    ),
                )
            }
        }
        Err(e) => fail(2, format!("seed {}: {e}", args.seed)),
    }
}

fn cmd_sdp_selftest(args: SelftestArgs) -> u8 {
    if let Some(dir) = &args.dump_problems {
        if let Err(e) = std::fs::create_dir_all(dir) {
            return fail(1, format!("cannot create {}: {e}", dir.display()));
        }
        let table = match werner_chsh_table(1.0) {
            Ok(t) => t,
            Err(e) => return fail(2, e),
        };
        match anticom_sq_problem(&table, 2, true) {
            Ok(p) => {
                let path = dir.join("anticom_sq_ideal.json");
                if let Err(e) = std::fs::write(&path, p.to_json().to_string()) {
                    return fail(1, format!("cannot write {}: {e}", path.display()));
                }
            }
            Err(e) => return fail(2, e),
        }
    }
    match sdp_selftest_battery(args.inject_loose_tolerance) {
        Ok(checks) => {
            println!(
                "{:<36} {:>14} {:>14} {:>11} {}",
                "check", "value", "target", "deviation", "result"
            );
            let mut failures = 0;
            for c in &checks {
                println!(
                    "{:<36} {:>14.9} {:>14.9} {:>11.2e} {}",
                    c.name,
                    c.value,
                    c.target,
                    c.value - c.target,
                    if c.pass { "pass" } else { "FAIL" }
                );
                if !c.pass {
                    failures += 1;
                }
            }
            if failures == 0 {
                0
            } else {
                fail(2, format!("{failures} conformance check(s) failed"))
            }
        }
        Err(e) => fail(2, e),
    }
}
