//! `rootsim --list | --run <name|all> [mode flags] [--format human|json]`.
//!
//! Exit status: 0 when every run met its expectation, 1 when some run did
//! not, 2 on a usage error or an unknown scenario name.

use std::ffi::OsString;
use std::io::Write;

use clap::{ArgGroup, Parser, ValueEnum};

use crate::report::{render_table, ModeConfig, Row};
use crate::scenarios::{self, find, list_scenarios};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "rootsim", about = "Run binding scenarios against the moving-collector runtime model")]
#[command(group(ArgGroup::new("action").required(true).args(["list", "run"])))]
struct Args {
    /// List scenarios and exit.
    #[arg(long)]
    list: bool,
    /// Scenario name, or `all`.
    #[arg(long, value_name = "NAME")]
    run: Option<String>,
    /// Collect before every allocation.
    #[arg(long)]
    torture: bool,
    /// Check slot registration on every operation.
    #[arg(long)]
    defensive: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = ModeConfig::default().semispace_words)]
    semispace_words: usize,
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
}

pub fn cli_main<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match run(&args, out) {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(err, "rootsim: {message}");
            2
        }
    }
}

fn run(args: &Args, out: &mut dyn Write) -> Result<i32, String> {
    let io = |e: std::io::Error| e.to_string();
    if args.list {
        for (name, description) in list_scenarios() {
            match args.format {
                Format::Human => writeln!(out, "{name:<24} {description}").map_err(io)?,
                Format::Json => {
                    let line = serde_json::json!({ "name": name, "description": description });
                    writeln!(out, "{line}").map_err(io)?
                }
            }
        }
        return Ok(0);
    }
    let name = args.run.as_deref().expect("clap requires --list or --run");
    let selected = if name == "all" {
        scenarios::scenarios()
    } else {
        vec![find(name).ok_or_else(|| scenarios::UnknownScenario(name.to_string()).to_string())?]
    };
    let mode = ModeConfig {
        torture: args.torture,
        defensive: args.defensive,
        semispace_words: args.semispace_words,
        seed: args.seed,
    };
    let runs: Vec<_> = selected.iter().map(|s| scenarios::execute(s, mode)).collect();
    match args.format {
        Format::Json => {
            for r in &runs {
                writeln!(out, "{}", r.report.to_json_line()).map_err(io)?;
            }
        }
        Format::Human => {
            let rows: Vec<Row<'_>> = runs
                .iter()
                .map(|r| Row { report: &r.report, expected: r.expected.to_string(), met: r.met })
                .collect();
            write!(out, "{}", render_table(&rows)).map_err(io)?;
            let met = runs.iter().filter(|r| r.met).count();
            writeln!(
                out,
                "\n{met}/{} expectations met (torture={}, defensive={}, seed={}, semispace_words={})",
                runs.len(),
                mode.torture,
                mode.defensive,
                mode.seed,
                mode.semispace_words
            )
            .map_err(io)?;
        }
    }
    Ok(if runs.iter().all(|r| r.met) { 0 } else { 1 })
}
