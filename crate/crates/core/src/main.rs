//! Batch CLI: solve definable instances, list orbit decompositions, search
//! and verify UNSAT certificates, and export groundings as DIMACS CNF or DOT.
//!
//! Exit codes: 0 = SAT (or certificate found and verified, or export done),
//! 1 = UNSAT (or no certificate found), 2 = any error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use defcsp::certificates::{canonical_pool, find_certificate, shrink, verify, CertificateSearch};
use defcsp::csp_model::DefinableInstance;
use defcsp::defsets::orbits;
use defcsp::finite_solver::{encode_tsc, to_dimacs, FiniteCsp};
use defcsp::orbit_solver::{decide, Outcome};
use defcsp::parser::parse;

#[derive(Parser)]
#[command(name = "defcsp", about = "definable CSP solver and certificate generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Largest atom pool tried during certificate search.
    #[arg(long, global = true, default_value_t = 6)]
    max_pool: usize,
    /// Node budget for the exhaustive brute-force oracle.
    #[arg(long, global = true, default_value_t = 10_000_000)]
    brute_bound: u64,
    /// Write the JSON output here as well as to stdout.
    #[arg(long, global = true)]
    json: Option<PathBuf>,
    /// Write a DOT rendering of the grounded (sub)instance here.
    #[arg(long, global = true)]
    dot: Option<PathBuf>,
    /// Write the DIMACS CNF here.
    #[arg(long, global = true)]
    dimacs: Option<PathBuf>,
    /// Reserved: the pipeline has no randomness. Always rejected.
    #[arg(long, global = true)]
    seedless: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Decide the instance; print the definable solution or UNSAT.
    Solve { file: PathBuf },
    /// List the orbit decomposition of the variable set.
    Orbits { file: PathBuf },
    /// Search, shrink and verify a finite UNSAT certificate.
    Certify { file: PathBuf },
    /// Ground over the canonical pool and export the T/S/C encoding.
    ExportDimacs {
        file: PathBuf,
        /// Number of integer atoms in the grounding pool.
        #[arg(long, default_value_t = 3)]
        pool: usize,
    },
    /// Ground over the canonical pool and export the grounded graph.
    ExportDot {
        file: PathBuf,
        /// Number of integer atoms in the grounding pool.
        #[arg(long, default_value_t = 3)]
        pool: usize,
    },
}

fn fail(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(2)
}

fn load(file: &PathBuf) -> Result<DefinableInstance, String> {
    let text = fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    let parsed = parse(&text).map_err(|ds| {
        ds.iter()
            .map(|d| format!("{}: {d}", file.display()))
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    parsed.instance().map_err(|ds| {
        ds.iter()
            .map(|d| format!("{}: {d}", file.display()))
            .collect::<Vec<_>>()
            .join("\n")
    })
}

fn emit_json(value: &serde_json::Value, path: &Option<PathBuf>) -> Result<(), String> {
    let text = format!("{}\n", serde_json::to_string_pretty(value).expect("serializable"));
    print!("{text}");
    if let Some(p) = path {
        fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    Ok(())
}

fn emit_text(text: &str, path: &Option<PathBuf>, echo: bool) -> Result<(), String> {
    if echo {
        print!("{text}");
    }
    if let Some(p) = path {
        fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode, String> {
    match &cli.command {
        Command::Solve { file } => {
            let instance = load(file)?;
            match decide(&instance).map_err(|e| e.to_string())? {
                Outcome::Sat(sol) => {
                    let var_orbits = orbits(&instance.variables, &instance.ctx)
                        .map_err(|e| e.to_string())?;
                    let assignment: Vec<serde_json::Value> = var_orbits
                        .iter()
                        .zip(&sol.assignment)
                        .map(|(o, &v)| {
                            json!({
                                "orbit": o.to_string(),
                                "value": instance.domain.elements[v],
                            })
                        })
                        .collect();
                    let support: Vec<String> =
                        sol.support.params().iter().map(|a| a.to_string()).collect();
                    emit_json(
                        &json!({
                            "status": "SAT",
                            "support": support,
                            "assignment": assignment,
                        }),
                        &cli.json,
                    )?;
                    Ok(ExitCode::SUCCESS)
                }
                Outcome::Unsat => {
                    emit_json(&json!({ "status": "UNSAT" }), &cli.json)?;
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Orbits { file } => {
            let instance = load(file)?;
            let var_orbits =
                orbits(&instance.variables, &instance.ctx).map_err(|e| e.to_string())?;
            for (i, o) in var_orbits.iter().enumerate() {
                println!("{i}: {o}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify { file } => {
            let instance = load(file)?;
            let found = find_certificate(&instance, cli.max_pool, cli.brute_bound)
                .map_err(|e| e.to_string())?;
            match found {
                CertificateSearch::NotFound => {
                    emit_json(&json!({ "status": "NOT_FOUND" }), &cli.json)?;
                    Ok(ExitCode::from(1))
                }
                CertificateSearch::Found(cert) => {
                    let cert =
                        shrink(&instance, &cert, cli.brute_bound).map_err(|e| e.to_string())?;
                    let verified =
                        verify(&instance, &cert, cli.brute_bound).map_err(|e| e.to_string())?;
                    if !verified {
                        return Err("certificate failed verification".into());
                    }
                    let vertices: Vec<serde_json::Value> = cert
                        .ground
                        .vertices
                        .iter()
                        .map(|(b, tuple)| {
                            json!({
                                "builder": b,
                                "atoms": tuple.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                            })
                        })
                        .collect();
                    let constraints: Vec<serde_json::Value> = cert
                        .ground
                        .constraints
                        .iter()
                        .map(|(rel, idxs)| json!({ "relation": rel, "args": idxs }))
                        .collect();
                    emit_json(
                        &json!({
                            "status": "FOUND",
                            "verified": true,
                            "minimal": cert.minimal,
                            "pool": cert.pool.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                            "vertices": vertices,
                            "constraints": constraints,
                        }),
                        &cli.json,
                    )?;
                    emit_text(&cert.ground.to_dot(), &cli.dot, false)?;
                    Ok(ExitCode::SUCCESS)
                }
            }
        }
        Command::ExportDimacs { file, pool } => {
            let instance = load(file)?;
            let atoms = canonical_pool(&instance, *pool);
            let ground = instance.ground(&atoms);
            let csp = FiniteCsp::from_ground(&ground, &instance.domain);
            let cnf = encode_tsc(&csp);
            emit_text(&to_dimacs(&cnf, &ground, &instance.domain), &cli.dimacs, cli.dimacs.is_none())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportDot { file, pool } => {
            let instance = load(file)?;
            let atoms = canonical_pool(&instance, *pool);
            let ground = instance.ground(&atoms);
            emit_text(&ground.to_dot(), &cli.dot, cli.dot.is_none())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.seedless {
        return fail("--seedless is reserved: the pipeline has no randomness");
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => fail(e),
    }
}
