//! Subcommand definitions and their implementations.

use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use ctrace::authority::Authority;
use ctrace::params::ProtocolParams;
use ctrace::sim::{self, Protocol, Scenario};
use rand_core::OsRng;

use crate::keyfile;
use crate::report::RunReport;
use crate::service;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "ctrace", version, about = "Contact-tracing protocol simulator and authority service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario, check every infection against the oracle, write a report.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides `params.protocol` from the scenario.
        #[arg(long)]
        protocol: Option<Protocol>,
        /// Overrides `seed` from the scenario.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the event trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Serve the submission database over TCP.
    Serve {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        authority_key: PathBuf,
        #[arg(long, default_value_t = ProtocolParams::default().retention_days)]
        retention_days: u32,
    },
    /// Generate an authority key pair.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn usage(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    EXIT_USAGE
}

pub fn simulate(
    scenario_path: &Path,
    protocol: Option<Protocol>,
    seed: Option<u64>,
    out: &Path,
    trace: Option<&Path>,
) -> u8 {
    let text = match fs::read_to_string(scenario_path) {
        Ok(t) => t,
        Err(e) => return usage(format_args!("{}: {e}", scenario_path.display())),
    };
    let mut scenario = match Scenario::from_json(&text) {
        Ok(s) => s,
        Err(e) => return usage(format_args!("{}: {e}", scenario_path.display())),
    };
    if let Some(p) = protocol {
        scenario.params.protocol = p;
    }
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let output = match sim::run(&scenario) {
        Ok(o) => o,
        Err(e) => return usage(format_args!("{}: {e}", scenario_path.display())),
    };
    let report = RunReport::build(&scenario, &output);
    if let Err(e) = fs::write(out, report.to_json()) {
        return usage(format_args!("{}: {e}", out.display()));
    }
    if let Some(path) = trace {
        if let Err(e) = fs::write(path, output.trace.to_jsonl()) {
            return usage(format_args!("{}: {e}", path.display()));
        }
    }
    for inf in &report.infections {
        let v = &inf.verdict;
        println!(
            "{} @ {}: {} contact(s), {} [missing: {:?}, unexpected: {:?}]",
            inf.device,
            inf.t,
            inf.contacts.len(),
            match (v.pass, report.expect_false_positive && v.completeness_violations.is_empty()) {
                (true, _) => "PASS",
                (false, true) => "FALSE POSITIVE (expected)",
                (false, false) => "FAIL",
            },
            v.completeness_violations,
            v.soundness_violations,
        );
    }
    if report.pass {
        println!("PASS");
        EXIT_PASS
    } else {
        println!("FAIL");
        EXIT_FAIL
    }
}

pub fn serve(listen: &str, key_path: &Path, retention_days: u32) -> u8 {
    let keys = match keyfile::load(key_path) {
        Ok(k) => k,
        Err(e) => return usage(e),
    };
    let listener = match TcpListener::bind(listen) {
        Ok(l) => l,
        Err(e) => return usage(format_args!("{listen}: {e}")),
    };
    match listener.local_addr() {
        Ok(addr) => println!("listening on {addr}"),
        Err(e) => return usage(e),
    }
    let authority = Arc::new(Authority::new(keys, retention_days));
    match service::serve(listener, authority) {
        Ok(()) => EXIT_PASS,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAIL
        }
    }
}

pub fn keygen(out: &Path, force: bool) -> u8 {
    match keyfile::generate(out, force, &mut OsRng) {
        Ok(keys) => {
            println!("{}", keys.pk.to_hex());
            EXIT_PASS
        }
        Err(e) => usage(e),
    }
}

pub fn run(cli: Cli) -> ExitCode {
    let code = match cli.command {
        Command::Simulate { scenario, protocol, seed, out, trace } => {
            simulate(&scenario, protocol, seed, &out, trace.as_deref())
        }
        Command::Serve { listen, authority_key, retention_days } => serve(&listen, &authority_key, retention_days),
        Command::Keygen { out, force } => keygen(&out, force),
    };
    ExitCode::from(code)
}
