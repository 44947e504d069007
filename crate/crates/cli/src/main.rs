use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use oacs_core::config::Config;
use oacs_core::control::serve_control;
use oacs_core::keypad::Key;
use oacs_core::{load_users, run_scenario, save_users, Scenario, Simulator};

const TAP_MS: u64 = 60;

#[derive(Parser)]
#[command(
    name = "oacs",
    version,
    about = "Keypad door access controller simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scripted scenario and check its expectations.
    Run {
        #[arg(long)]
        users: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Append audit entries to this file.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write the snapshot trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Drive the panel from stdin, one line of key symbols at a time.
    Interactive {
        #[arg(long)]
        users: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Serve the JSON-lines control protocol on 127.0.0.1.
    Serve {
        #[arg(long)]
        users: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Clear every used flag in a users file.
    ResetUsed {
        #[arg(long)]
        users: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let cfg = match path {
        Some(path) => {
            Config::load(path).with_context(|| format!("reading config {}", path.display()))?
        }
        None => Config::default(),
    };
    Ok(cfg)
}

fn run(
    users: &Path,
    script: &Path,
    config: Option<&Path>,
    log: Option<PathBuf>,
    trace: Option<&Path>,
) -> Result<bool> {
    let mut cfg = load_config(config)?;
    if log.is_some() {
        cfg.log_path = log;
    }
    let db = load_users(users).with_context(|| format!("loading users {}", users.display()))?;
    let text = fs::read_to_string(script)
        .with_context(|| format!("reading script {}", script.display()))?;
    let scenario =
        Scenario::parse(&text).with_context(|| format!("parsing {}", script.display()))?;
    let report = run_scenario(&cfg, db, &scenario)?;
    for outcome in &report.outcomes {
        println!("{outcome}");
    }
    if let Some(path) = trace {
        fs::write(path, report.trace_jsonl())
            .with_context(|| format!("writing trace {}", path.display()))?;
    }
    let failed = report.failures().count();
    println!(
        "{} assertions, {failed} failed, {} grants",
        report.outcomes.len(),
        report.grants.len()
    );
    Ok(failed == 0)
}

fn render(sim: &Simulator, out: &mut impl Write) -> io::Result<()> {
    let snap = sim.snapshot();
    writeln!(out, "+----------------+")?;
    for line in &snap.lcd {
        writeln!(out, "|{line}|")?;
    }
    writeln!(out, "+----------------+")?;
    writeln!(
        out,
        "tick {} lock {} alarm {} mode {} wrong {}",
        snap.tick,
        if snap.lock { "LOCKED" } else { "OPEN" },
        if snap.alarm { "ON" } else { "off" },
        snap.mode,
        snap.wrong
    )
}

fn tap(sim: &mut Simulator, key: Key) -> Result<()> {
    sim.press(key);
    sim.advance(TAP_MS)?;
    sim.release(key);
    sim.advance(TAP_MS)?;
    Ok(())
}

fn interactive(users: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let db = load_users(users).with_context(|| format!("loading users {}", users.display()))?;
    let mut sim = Simulator::new(&cfg, db)?;
    let start = Instant::now();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "keys 0-9 * #, :reset, :quit")?;
    sim.advance(1)?;
    render(&sim, &mut out)?;
    for line in io::stdin().lock().lines() {
        let line = line?;
        let wall = start.elapsed().as_millis() as u64;
        if wall > sim.now() {
            sim.advance_to(wall)?;
        }
        let grants = sim.grants().len();
        match line.trim() {
            ":quit" => break,
            ":reset" => sim.admin_reset()?,
            input => {
                for symbol in input.chars().filter(|c| !c.is_whitespace()) {
                    match Key::from_symbol(symbol) {
                        Some(key) => tap(&mut sim, key)?,
                        None => writeln!(out, "no key {symbol:?}")?,
                    }
                }
            }
        }
        if sim.grants().len() > grants {
            save_users(sim.database(), users)
                .with_context(|| format!("saving users {}", users.display()))?;
        }
        render(&sim, &mut out)?;
    }
    Ok(())
}

fn serve(users: &Path, port: u16, config: Option<&Path>) -> Result<()> {
    let mut cfg = load_config(config)?;
    cfg.users_path = Some(users.to_path_buf());
    let db = load_users(users).with_context(|| format!("loading users {}", users.display()))?;
    let server = serve_control(&cfg, db, ("127.0.0.1", port))?;
    eprintln!("listening on {}", server.local_addr());
    server.wait()?;
    Ok(())
}

fn reset_used(users: &Path) -> Result<()> {
    let mut db = load_users(users).with_context(|| format!("loading users {}", users.display()))?;
    let cleared = db.used_count();
    db.reset_all_used();
    save_users(&db, users).with_context(|| format!("saving users {}", users.display()))?;
    println!("cleared {cleared} of {} used flags", db.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            users,
            script,
            config,
            log,
            trace,
        } => run(&users, &script, config.as_deref(), log, trace.as_deref()).and_then(|ok| {
            if ok {
                Ok(())
            } else {
                bail!("scenario expectations failed")
            }
        }),
        Command::Interactive { users, config } => interactive(&users, config.as_deref()),
        Command::Serve {
            users,
            port,
            config,
        } => serve(&users, port, config.as_deref()),
        Command::ResetUsed { users } => reset_used(&users),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
