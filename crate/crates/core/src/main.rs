use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use amd_forecast::config::PipelineConfig;
use amd_forecast::metrics::MetricReport;
use amd_forecast::pipeline::{cmd_clean, cmd_forecast, cmd_inspect, cmd_synth, cmd_train};
use amd_forecast::Result;

#[derive(Parser)]
#[command(name = "amd-forecast", version, about = "Water-quality forecasting pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the root seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Augmented Dickey-Fuller test per parameter.
    Inspect(Common),
    /// Anomaly flagging and daily interpolation.
    Clean(Common),
    /// Train the configured neural model on the daily data.
    Train(Common),
    /// Roll the trained model forward and write the report bundle.
    Forecast(Common),
    /// Write a synthetic weekly dataset to the configured input path.
    Synth(Common),
}

struct Style {
    color: bool,
}

impl Style {
    fn detect() -> Self {
        Self {
            color: std::env::var_os("NO_COLOR").is_none() && std::io::stdout().is_terminal(),
        }
    }

    fn paint(&self, code: &str, text: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }
}

fn load(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn print_report(split: &str, r: &MetricReport) {
    let nse = r.overall.nse.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "{split:<10} mse {:.6}  mae {:.6}  nse {nse}  (scaled, n = {})",
        r.overall.mse, r.overall.mae, r.overall.n
    );
}

fn run(command: Command, style: &Style) -> Result<()> {
    match command {
        Command::Inspect(c) => {
            let cfg = load(&c)?;
            println!("{:<14} {:>10} {:>10} {:>5}  verdict", "parameter", "adf", "p-value", "lags");
            for row in cmd_inspect(&cfg)? {
                let verdict = match row.verdict.as_str() {
                    "stationary" => style.paint("32", &row.verdict),
                    "non-stationary" => style.paint("33", &row.verdict),
                    _ => style.paint("31", &row.verdict),
                };
                match row.result {
                    Some(a) => println!(
                        "{:<14} {:>10.4} {:>10.4} {:>5}  {verdict}",
                        row.parameter, a.statistic, a.p_value, a.lags_used
                    ),
                    None => println!("{:<14} {:>10} {:>10} {:>5}  {verdict}", row.parameter, "-", "-", "-"),
                }
            }
            println!("wrote {}", cfg.output.join("adf.csv").display());
        }
        Command::Clean(c) => {
            let cfg = load(&c)?;
            let s = cmd_clean(&cfg)?;
            println!("flagged {} rows: {:?}", s.flagged.len(), s.flagged);
            for p in &s.plan.parameters {
                let chosen: Vec<&str> = p.chosen.iter().map(|m| m.name()).collect();
                println!("{:<14} {}", p.parameter, chosen.join(" + "));
            }
            println!("daily rows: {}; wrote {}", s.daily_rows, cfg.output.display());
        }
        Command::Train(c) => {
            let cfg = load(&c)?;
            let s = cmd_train(&cfg)?;
            for w in &s.warnings {
                eprintln!("{} {w}", style.paint("33", "warning:"));
            }
            println!(
                "{} window {} epochs run {}/{}, best epoch {}",
                s.spec.variant.name(),
                s.spec.window,
                s.history.epochs_run(),
                s.epochs,
                s.history.best_epoch.map_or("-".to_string(), |e| (e + 1).to_string())
            );
            print_report("train", &s.train_report);
            print_report("validation", &s.validation_report);
            let fit = match s.diagnosis {
                Some(d) => format!("{d:?}"),
                None => "n/a (no epochs run)".to_string(),
            };
            println!("fit diagnosis: {}", style.paint("1", &fit));
        }
        Command::Forecast(c) => {
            let cfg = load(&c)?;
            let s = cmd_forecast(&cfg)?;
            println!("forecast rows: {}", s.rows);
            if let Some(e) = &s.evaluation {
                println!("evaluated on {} measured dates (original units)", e.matched_dates.len());
                for m in &e.per_parameter {
                    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
                    println!("{:<14} mse {:>14} mae {:>12}", m.parameter, f(m.mse), f(m.mae));
                }
            }
            for f in &s.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Synth(c) => {
            let cfg = load(&c)?;
            let s = cmd_synth(&cfg)?;
            println!("planted {} anomalies", s.anomalies);
            for f in &s.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let style = Style::detect();
    match run(cli.command, &style) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{} {e}", style.paint("31", "error:"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
