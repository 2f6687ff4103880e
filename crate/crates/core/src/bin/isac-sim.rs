use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isac_sim::harness::{emit_csv, emit_json, format_row, run_experiment, ExperimentKind, ExperimentSpec, CSV_HEADER};
use isac_sim::scenario::{layout_for, load_config_file, Preset, SimulationConfig};

#[derive(Parser)]
#[command(name = "isac-sim", version, about = "Distributed ISAC network simulation and target-localization attack")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo run of a single configuration.
    Run(Common),
    /// Parameter sweep.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        /// Comma-separated sweep values (target x, cell size in m, or known AP count).
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Target,
    Cellsize,
    Knownaps,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Paper,
    Desk,
}

#[derive(Args)]
struct Common {
    /// TOML file with configuration and layout keys, applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "paper")]
    preset: PresetArg,
    /// CSV output; rows go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the rows as a JSON array.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Per-realization records as JSON lines.
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0: all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Comma-separated UE antenna counts; one block of rows per value.
    #[arg(long, value_delimiter = ',')]
    m_ue: Vec<usize>,
    /// Config override `key=value`, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Record wall-clock time per row (output is then no longer reproducible byte for byte).
    #[arg(long)]
    timing: bool,
}

fn run(kind: ExperimentKind, values: Vec<f64>, c: Common) -> isac_sim::Result<()> {
    let mut cfg = SimulationConfig::preset(match c.preset {
        PresetArg::Paper => Preset::Paper,
        PresetArg::Desk => Preset::Desk,
    });
    for s in &c.set {
        cfg.set_str(s)?;
    }
    let mut layout = layout_for(cfg.n_tx);
    if let Some(p) = &c.config {
        load_config_file(p, &mut cfg, &mut layout)?;
        // command-line overrides win over the file
        for s in &c.set {
            cfg.set_str(s)?;
        }
    }
    // n_tx may have changed without an explicit list of positions
    if layout.tx_ap_pos.len() != cfg.n_tx {
        let mut tx = layout_for(cfg.n_tx).tx_ap_pos;
        tx.truncate(cfg.n_tx);
        layout.tx_ap_pos = tx;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let mut spec = ExperimentSpec::new(kind, values);
    spec.m_ue_values = c.m_ue;
    spec.output_path = c.out.clone();
    spec.records_path = c.records;
    spec.jobs = c.jobs;
    spec.timing = c.timing;
    let rows = run_experiment(&spec, &cfg, &layout)?;
    if c.out.is_none() {
        println!("{CSV_HEADER}");
        for r in &rows {
            println!("{}", format_row(r));
        }
    } else if let Some(p) = &c.out {
        // rewrite in one piece so a finished file never depends on flush timing
        emit_csv(&rows, p)?;
    }
    if let Some(p) = &c.json {
        emit_json(&rows, p)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Command::Run(c) => run(ExperimentKind::Single, Vec::new(), c),
        Command::Sweep { kind, values, common } => {
            let kind = match kind {
                SweepKind::Target => ExperimentKind::TargetSweep,
                SweepKind::Cellsize => ExperimentKind::CellsizeSweep,
                SweepKind::Knownaps => ExperimentKind::KnownapsSweep,
            };
            run(kind, values, common)
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("isac-sim: {e}");
            ExitCode::FAILURE
        }
    }
}
