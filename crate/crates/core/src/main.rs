use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nena::ingest::load_config;
use nena::pipeline::{parse_stages, read_cohort_manifest, run_all, RunOptions, RunStatus, Stage};
use nena::synth::{generate_cohort, write_cohort, CohortSpec, Coupling};
use nena::{NetworkKind, PipelineConfig};

const PRECEDENCE: &str = "\
Settings are resolved as: command-line flag > config file (--config) > built-in default.
All randomness (ICA initialisation, synthetic data) derives from --seed.

Exit status: 0 success, 1 input error, 2 numerical failure, 3 partial completion.";

#[derive(Parser, Debug)]
#[command(name = "nena", version, about = "Symmetric (NENA) and directed (NONA) co-occurrence network analysis of EEG", after_help = PRECEDENCE)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Config file (`key = value` lines)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output (and, for later stages, working) directory
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Seed for every random draw; overrides `rng_seed`
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Participants processed concurrently (0 = all cores)
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    jobs: usize,
    /// Disable ICA artifact removal; overrides `ica_enabled`
    #[arg(long, global = true)]
    no_ica: bool,
    /// Directed-network window length L; overrides `nona_window`
    #[arg(long, global = true, value_name = "L")]
    window: Option<usize>,
    /// Restrict networks, projections, statistics and figures to one kind
    #[arg(long, global = true, value_enum, default_value_t = KindArg::Both)]
    kind: KindArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Nena,
    Nona,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort with known band activations into --out
    Synth {
        /// Participants per condition
        #[arg(long, default_value_t = 11)]
        participants: usize,
        /// Band probability on coupled epochs
        #[arg(long, default_value_t = 0.9)]
        p_high: f64,
        /// Band probability on all other epochs
        #[arg(long, default_value_t = 0.1)]
        p_low: f64,
        /// Trials per participant
        #[arg(long, default_value_t = 36)]
        trials: usize,
        /// Additive white noise SD in microvolts
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
    },
    /// Re-reference, filter, epoch and clean raw recordings
    Preprocess {
        /// Cohort manifest (`participant,eeg,trials`)
        cohort: PathBuf,
        /// Also write re-referenced and filtered signals
        #[arg(long)]
        dump: bool,
        /// Skip participants that fail instead of aborting (exit 3)
        #[arg(long)]
        keep_going: bool,
    },
    /// Encode cleaned recordings into per-epoch code vectors (codes.csv)
    Encode {
        /// Manifest of cleaned recordings, e.g. <out>/preprocessed.csv
        cohort: PathBuf,
        /// Skip participants that fail instead of aborting (exit 3)
        #[arg(long)]
        keep_going: bool,
    },
    /// Accumulate per-unit networks from a code table
    Network {
        /// Code table; defaults to <out>/codes.csv
        codes: Option<PathBuf>,
    },
    /// Jointly project unit networks and place nodes
    Project,
    /// Compare conditions on each projection axis
    Stats,
    /// Draw network diagrams and scatter plots from the exports in --out
    Render,
    /// Run the pipeline end to end
    Run {
        /// Cohort manifest (`participant,eeg,trials`)
        cohort: PathBuf,
        /// Comma-separated subset of preprocess,features,network,project,stats,render
        #[arg(long, value_name = "LIST")]
        stages: Option<String>,
        /// Also write re-referenced and filtered signals
        #[arg(long)]
        dump: bool,
        /// Skip participants that fail instead of aborting (exit 3)
        #[arg(long)]
        keep_going: bool,
    },
}

fn resolve_config(g: &Global) -> Result<PipelineConfig, String> {
    let mut config = match &g.config {
        Some(path) => {
            let loaded = load_config(path).map_err(|e| format!("config {}: {e}", path.display()))?;
            for w in loaded.warnings {
                log::warn!("config {}: {w}", path.display());
            }
            loaded.config
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.rng_seed = seed;
    }
    if g.no_ica {
        config.ica_enabled = false;
    }
    if let Some(l) = g.window {
        config.nona_window = l;
    }
    config.validate().map_err(|e| format!("config: {e}"))?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    ExitCode::from(run(cli) as u8)
}

fn run(cli: Cli) -> i32 {
    let config = match resolve_config(&cli.global) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let g = &cli.global;
    let mut opts = RunOptions::new(&g.out, config);
    opts.config_path = g.config.clone();
    opts.jobs = g.jobs;
    opts.kinds = match g.kind {
        KindArg::Nena => vec![NetworkKind::Symmetric],
        KindArg::Nona => vec![NetworkKind::Directed],
        KindArg::Both => vec![NetworkKind::Symmetric, NetworkKind::Directed],
    };
    let only = |s: Stage| [s].into_iter().collect();
    let cohort = match cli.command {
        Command::Synth {
            participants,
            p_high,
            p_low,
            trials,
            noise,
        } => {
            let spec = CohortSpec {
                participants_per_condition: participants,
                coupling: Coupling { p_high, p_low },
                trials_per_participant: trials,
                noise_sd: noise,
                channels: opts.config.channels.len(),
                sample_rate: opts.config.sample_rate,
                ..CohortSpec::default()
            };
            return match generate_cohort(&spec, opts.config.rng_seed).and_then(|c| write_cohort(&g.out, &c)) {
                Ok(path) => {
                    println!("{}", path.display());
                    0
                }
                Err(e) => {
                    eprintln!("error: synth: {e}");
                    1
                }
            };
        }
        Command::Preprocess { cohort, dump, keep_going } => {
            opts.stages = only(Stage::Preprocess);
            opts.dump_intermediate = dump;
            opts.keep_going = keep_going;
            Some(cohort)
        }
        Command::Encode { cohort, keep_going } => {
            opts.stages = only(Stage::Features);
            opts.keep_going = keep_going;
            Some(cohort)
        }
        Command::Network { codes } => {
            opts.stages = only(Stage::Network);
            opts.codes = codes;
            None
        }
        Command::Project => {
            opts.stages = only(Stage::Project);
            None
        }
        Command::Stats => {
            opts.stages = only(Stage::Stats);
            None
        }
        Command::Render => {
            opts.stages = only(Stage::Render);
            None
        }
        Command::Run {
            cohort,
            stages,
            dump,
            keep_going,
        } => {
            if let Some(list) = stages {
                match parse_stages(&list) {
                    Ok(s) if !s.is_empty() => opts.stages = s,
                    Ok(_) => {
                        eprintln!("error: --stages is empty");
                        return 1;
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        return 1;
                    }
                }
            }
            opts.dump_intermediate = dump;
            opts.keep_going = keep_going;
            Some(cohort)
        }
    };
    let inputs = match cohort.as_deref().map(read_cohort_manifest).transpose() {
        Ok(i) => i.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: cohort manifest: {e}");
            return 1;
        }
    };
    match run_all(&inputs, &opts) {
        Ok(m) => {
            for w in &m.warnings {
                log::warn!("{w}");
            }
            if m.status == RunStatus::Partial {
                eprintln!("partial completion; see {}", g.out.join(".partial").display());
                3
            } else {
                0
            }
        }
        Err(f) => {
            for w in &f.manifest.warnings {
                log::warn!("{w}");
            }
            eprintln!("error: {}", f.error);
            f.exit_code()
        }
    }
}
