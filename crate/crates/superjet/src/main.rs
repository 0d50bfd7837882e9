use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use superjet::cli::{self, CValue, Report};
use superjet::{Error, Result};

#[derive(Parser)]
#[command(name = "superjet", version, about = "Exact Schouten brackets, super tau-covers and Virasoro symmetries")]
struct Args {
    #[command(subcommand)]
    verb: Verb,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "symbolic")]
    c: String,
    #[arg(long, global = true, default_value_t = 4)]
    cutoff: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Verb {
    /// Schouten bracket of two local functionals given by densities.
    Schouten {
        p: String,
        q: String,
        #[arg(long, value_delimiter = ',', default_value = "u")]
        fields: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        params: Vec<String>,
        /// Fail unless the bracket vanishes.
        #[arg(long)]
        expect_zero: bool,
    },
    /// WDVV, calibration and the associated bihamiltonian pair of a Frobenius file.
    WdvvCheck { file: String },
    /// Super extension of the dispersive KdV hierarchy.
    KdvSuper,
    /// Quadratic Virasoro operators of a Frobenius file (default: bundled B2).
    VirasoroOps { file: Option<String> },
    /// Deformed s_2 symmetry of the one-dimensional family.
    #[command(name = "virasoro-solve-1d")]
    VirasoroSolve1d,
    /// Run a built-in worked example (kdv, b2, s2).
    VerifyExample { name: String },
    /// Run a TOML scenario file.
    Scenario { file: PathBuf },
}

fn dispatch(a: &Args) -> Result<Report> {
    match &a.verb {
        Verb::Schouten { p, q, fields, params, expect_zero } => cli::run_schouten(p, q, fields, params, *expect_zero),
        Verb::WdvvCheck { file } => cli::run_wdvv(&cli::load_frob(file)?, a.cutoff),
        Verb::KdvSuper => cli::run_kdv_super(),
        Verb::VirasoroOps { file } => cli::run_virasoro_ops(&cli::load_frob(file.as_deref().unwrap_or("b2"))?, a.cutoff),
        Verb::VirasoroSolve1d => cli::run_virasoro_solve_1d(&a.c.parse::<CValue>()?),
        Verb::VerifyExample { name } => cli::run_example(name),
        Verb::Scenario { file } => {
            let text = std::fs::read_to_string(file).map_err(|e| Error::Io(format!("{}: {e}", file.display())))?;
            cli::run_scenario(&text, file.parent().unwrap_or(std::path::Path::new(".")))
        }
    }
}

fn main() {
    // `superjet run <verb> ...` is accepted as an alias
    let mut argv: Vec<String> = std::env::args().collect();
    let mut i = 1;
    while i < argv.len() {
        match argv[i].as_str() {
            "--format" | "--out" | "--c" | "--cutoff" => i += 2,
            a if a.starts_with('-') => i += 1,
            "run" => {
                argv.remove(i);
                break;
            }
            _ => break,
        }
    }
    let args = Args::parse_from(argv);
    let res = dispatch(&args);
    let code = cli::exit_code(&res);
    let body = match &res {
        Ok(rep) => match args.format {
            Format::Json => serde_json::to_string_pretty(&rep.to_json()).unwrap() + "\n",
            Format::Text => rep.to_text(),
        },
        Err(e) => {
            match args.format {
                Format::Json => {
                    let v = serde_json::json!({"schema": 1, "ok": false, "error": {"code": e.code(), "message": e.to_string()}});
                    println!("{}", serde_json::to_string_pretty(&v).unwrap());
                }
                Format::Text => eprintln!("error[{}]: {e}", e.code()),
            }
            std::process::exit(code);
        }
    };
    match &args.out {
        Some(p) => {
            if let Err(e) = std::fs::write(p, &body) {
                let e = Error::Io(format!("{}: {e}", p.display()));
                eprintln!("error[{}]: {e}", e.code());
                std::process::exit(e.code());
            }
        }
        None => print!("{body}"),
    }
    std::process::exit(code);
}
