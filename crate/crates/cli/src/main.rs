use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;

use clap::{Arg, ArgAction, ArgMatches, Command};
use teng_cli::config::{describe, key_to_flag, ConfigError, RunConfig, KEYS};
use teng_cli::runner::{dump_oracle, run_experiment, OutputManifest, RunError};
use teng_cli::selftest;

const USAGE: u8 = 2;

fn config_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .value_parser(clap::value_parser!(PathBuf))
            .help("key = value configuration file; flags override it"),
    );
    KEYS.iter().fold(cmd, |cmd, key| {
        cmd.arg(Arg::new(*key).long(key_to_flag(key)).value_name("VALUE").help(describe(key)).allow_hyphen_values(true).action(ArgAction::Set))
    })
}

fn cli() -> Command {
    Command::new("teng")
        .about("Sequential-in-time natural-gradient solver for the heat equation on the unit disk")
        .subcommand_required(true)
        .subcommand(config_args(Command::new("run").about("Run one experiment")))
        .subcommand(config_args(
            Command::new("compare").about("Run Euler and Heun concurrently into OUTPUT_DIR/euler and OUTPUT_DIR/heun"),
        ))
        .subcommand(Command::new("selftest").about("Check special functions, derivatives and integrator order"))
        .subcommand(config_args(Command::new("oracle").about("Write exact-solution grids at the field times")))
}

/// Config file text plus flag overrides in `KEYS` order.
fn sources(m: &ArgMatches) -> Result<(Option<String>, Vec<(String, String)>), String> {
    let text = match m.get_one::<PathBuf>("config") {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?),
        None => None,
    };
    let overrides = KEYS
        .iter()
        .filter_map(|k| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect();
    Ok((text, overrides))
}

fn resolve(m: &ArgMatches, extra: &[(String, String)]) -> Result<RunConfig, String> {
    let (text, mut overrides) = sources(m)?;
    overrides.extend_from_slice(extra);
    RunConfig::from_sources(text.as_deref(), &overrides).map_err(|e: ConfigError| e.to_string())
}

fn report(m: &OutputManifest) {
    if let Some(p) = &m.pretrain {
        println!(
            "pretrain: {} rounds, loss {:e} (target {:e}){}{}",
            p.rounds,
            p.loss.total,
            p.loss_tolerance,
            if p.from_snapshot { ", from snapshot" } else { "" },
            if p.tolerance_met { "" } else { ", TOLERANCE NOT MET" },
        );
    }
    println!("errors: {}", m.error_csv.display());
    for f in &m.field_grids {
        println!("fields t={}: {}", f.time, f.predicted.display());
    }
    if let Some(e) = m.final_rel_l2 {
        println!("final rel L2 error: {e:e}");
    }
    println!("wall time: {:.1?}", m.wall_time);
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    if let RunError::Engine { partial: Some(m), .. } = e {
        eprintln!("partial outputs kept:");
        report(m);
    }
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let usage = |msg: String| {
        eprintln!("error: {msg}");
        ExitCode::from(USAGE)
    };
    match matches.subcommand() {
        Some(("run", m)) => {
            let cfg = match resolve(m, &[]) {
                Ok(c) => c,
                Err(e) => return usage(e),
            };
            match run_experiment(&cfg) {
                Ok(manifest) => {
                    report(&manifest);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Some(("compare", m)) => {
            let mut cfgs = Vec::new();
            for scheme in ["euler", "heun"] {
                let base = match resolve(m, &[]) {
                    Ok(c) => c,
                    Err(e) => return usage(e),
                };
                let extra = vec![
                    ("scheme".to_string(), scheme.to_string()),
                    ("output_dir".to_string(), base.output_dir.join(scheme).display().to_string()),
                ];
                match resolve(m, &extra) {
                    Ok(c) => cfgs.push(c),
                    Err(e) => return usage(e),
                }
            }
            let results: Vec<_> = thread::scope(|s| {
                let handles: Vec<_> = cfgs.iter().map(|c| s.spawn(move || run_experiment(c))).collect();
                handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
            });
            let mut code = ExitCode::SUCCESS;
            for (cfg, result) in cfgs.iter().zip(results) {
                println!("== {:?} (dt {})", cfg.scheme, cfg.dt);
                match result {
                    Ok(manifest) => report(&manifest),
                    Err(e) => code = fail(&e),
                }
            }
            code
        }
        Some(("selftest", _)) => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Some(("oracle", m)) => {
            let cfg = match resolve(m, &[]) {
                Ok(c) => c,
                Err(e) => return usage(e),
            };
            match dump_oracle(&cfg) {
                Ok(paths) => {
                    paths.iter().for_each(|p| println!("{}", p.display()));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        _ => unreachable!("subcommand required"),
    }
}
