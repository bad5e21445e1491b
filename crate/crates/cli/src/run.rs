use std::path::Path;

use centralflow::diagnostics::ConservationReport;
use centralflow::dynamics::{simulate, Trajectory};
use centralflow::geometry::GridImmersion;
use centralflow::harness::{random_normal_field, run_experiment};
use centralflow::linearized::{fd_consistency, LinearizedAt};
use centralflow::nashmoser::{run as nash_moser, Problem, Termination};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::Config;
use crate::{CliError, Subcommand};

/// Highest mode, Sobolev order and H^s size of the random direction in `linearize-check`.
const CHECK_BAND: u32 = 8;
const CHECK_ORDER: f64 = 3.0;
const CHECK_SIZE: f64 = 100.0;

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    std::fs::write(
        path,
        serde_json::to_string_pretty(value).expect("json serializes"),
    )?;
    Ok(())
}

fn say(quiet: bool, line: impl AsRef<str>) {
    if !quiet {
        println!("{}", line.as_ref());
    }
}

fn run_summary(traj: &Trajectory) -> serde_json::Value {
    json!({
        "completed": traj.completed(),
        "abort": traj.abort,
        "dt": traj.dt,
        "steps": traj.steps,
        "samples": traj.samples.len(),
        "end_time": traj.end_time(),
        "max_displacement": traj.max_displacement(),
        "max_volume_gap": traj.max_volume_gap,
    })
}

/// Output files already on disk are kept when the run aborts.
fn aborted(traj: &Trajectory) -> Result<(), CliError> {
    match &traj.abort {
        Some(a) => Err(CliError::Numerical(format!(
            "run stopped at t = {}: {}",
            a.t, a.message
        ))),
        None => Ok(()),
    }
}

pub fn execute(sub: Subcommand, cfg: &Config, dir: &Path, quiet: bool) -> Result<(), CliError> {
    match sub {
        Subcommand::Simulate => {
            let traj = simulate(&cfg.sim_config()?)?;
            if cfg.output.nodes {
                traj.write_nodes_csv(&dir.join("nodes.csv"))?;
            }
            let summary = run_summary(&traj);
            write_json(&dir.join("summary.json"), &summary)?;
            say(
                quiet,
                format!("max displacement {:e}", traj.max_displacement()),
            );
            aborted(&traj)
        }
        Subcommand::Diagnose => {
            let traj = simulate(&cfg.sim_config()?)?;
            if cfg.output.nodes {
                traj.write_nodes_csv(&dir.join("nodes.csv"))?;
            }
            let report = ConservationReport::from_trajectory(&traj)?;
            report.write_csv(&dir.join("conservation.csv"))?;
            let conservation = report.summary();
            let mut summary = run_summary(&traj);
            summary["conservation"] =
                serde_json::to_value(&conservation).expect("summary serializes");
            write_json(&dir.join("summary.json"), &summary)?;
            say(
                quiet,
                format!(
                    "energy drift {:e}, angular momentum drift {:e}, volume bound {}",
                    conservation.e_ham_relative_drift,
                    conservation.angular_momentum_drift,
                    if conservation.volume_bounds.pass {
                        "holds"
                    } else {
                        "violated"
                    }
                ),
            );
            aborted(&traj)
        }
        Subcommand::LinearizeCheck => {
            let params = cfg.force_params()?;
            let (positions, _) = cfg.sim.initial.curve_data().sample(cfg.sim.m)?;
            let curve = GridImmersion::new_reference(positions)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.experiment.seed);
            let h = random_normal_field(&curve, CHECK_BAND, CHECK_ORDER, CHECK_SIZE, &mut rng)?;
            let report = fd_consistency(&curve, &params, &h, &cfg.experiment.deltas)?;
            let (lambda_min, lambda_max) = LinearizedAt::new(&curve, &params)?
                .coefficients()
                .ellipticity();
            let mut csv = String::from("delta,error\n");
            for (d, e) in report.deltas.iter().zip(&report.errors) {
                csv.push_str(&format!("{d:e},{e:e}\n"));
            }
            std::fs::write(dir.join("fd_consistency.csv"), csv)?;
            let band = cfg.experiment.tolerances.order_band;
            let pass = (report.slope - 2.0).abs() <= band;
            write_json(
                &dir.join("summary.json"),
                &json!({
                    "slope": report.slope,
                    "expected_slope": 2.0,
                    "band": band,
                    "pass": pass,
                    "ellipticity": [lambda_min, lambda_max],
                }),
            )?;
            say(
                quiet,
                format!("central-difference slope {:.4}", report.slope),
            );
            if pass {
                Ok(())
            } else {
                Err(CliError::Assertion(format!(
                    "central-difference slope {} is outside 2 ± {band}",
                    report.slope
                )))
            }
        }
        Subcommand::NashMoser => {
            let problem = Problem::new(cfg.nash_moser()?)?;
            let (solution, trace, _) = nash_moser(&problem)?;
            trace.write_csv(&dir.join("trace.csv"))?;
            trace.write_json(&dir.join("trace.json"))?;
            if cfg.output.nodes {
                solution.write_nodes_csv(&dir.join("nodes.csv"))?;
            }
            let last = trace.levels.last().map(|l| l.residual).unwrap_or(f64::NAN);
            say(
                quiet,
                format!(
                    "{} levels, final residual {last:e}: {}",
                    trace.levels.len(),
                    trace.termination.describe()
                ),
            );
            match trace.termination {
                Termination::Converged | Termination::MaxLevels => Ok(()),
                t @ (Termination::EpsilonTooLarge | Termination::Diverging) => {
                    Err(CliError::Numerical(t.describe().to_string()))
                }
            }
        }
        _ => {
            let kind = Config::experiment_kind(sub).expect("experiment subcommand");
            let report = run_experiment(&cfg.plan(kind)?)?;
            report.write(dir)?;
            for check in &report.checks {
                say(quiet, check.line());
            }
            for note in &report.notes {
                log::info!("{note}");
            }
            if report.passed() {
                Ok(())
            } else {
                let failed: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| c.name.as_str())
                    .collect();
                Err(CliError::Assertion(format!(
                    "{} failed: {}",
                    kind.name(),
                    failed.join(", ")
                )))
            }
        }
    }
}
