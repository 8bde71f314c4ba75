//! The `protorec` command line: train, evaluate, baseline, probe,
//! gradcheck and synth.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod workers;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use protorec::corpus::{ScriptMode, StressMode};

use config::{parse_seeds, ConfigFile, EXPERIMENT_FILE};
use error::{write, CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "protorec", version, about = "Protoform reconstruction experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model per seed.
    Train(DataArgs),
    /// Score trained models and baselines on the test split.
    Evaluate(EvalArgs),
    /// Score baselines only.
    Baseline(EvalArgs),
    /// Cluster language embeddings and compare with a gold tree.
    Probe(ProbeArgs),
    /// Finite-difference gradient checks.
    Gradcheck(GradArgs),
    /// Generate a synthetic cognate TSV.
    Synth(SynthCli),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cognate TSV (set_id, daughters..., proto).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Hyperparameter preset: romance or sinitic.
    #[arg(long)]
    pub preset: Option<String>,
    /// Seeds: `0,1,2`, `0..10` or a single number.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Header of the protoform column (default: last column).
    #[arg(long)]
    pub proto_column: Option<String>,
    /// Delete vowel length marks.
    #[arg(long)]
    pub strip_length: bool,
    /// Delete stress marks instead of keeping them as tokens.
    #[arg(long)]
    pub strip_stress: bool,
    /// Treat forms as orthography: one token per character, no FER.
    #[arg(long)]
    pub orthographic: bool,
    /// Seed of the train/validation/test split.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Override the number of training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma list of random, majority, corpar, svm, or `none`.
    #[arg(long)]
    pub baselines: Option<String>,
    /// Context families for CorPaR, e.g. `pos+ini` or `none`.
    #[arg(long)]
    pub corpar_context: Option<String>,
    /// Context families for the SVM-style classifier, e.g. `pos+str`.
    #[arg(long)]
    pub svm_context: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Newick gold tree (default: the bundled Romance tree when the
    /// languages match).
    #[arg(long)]
    pub gold_tree: Option<PathBuf>,
    /// Majority-rule consensus threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GradArgs {
    #[arg(long, default_value = "0,1,2")]
    pub seeds: String,
    /// Parameters sampled for the end-to-end model check.
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SynthCli {
    /// Rules file; without it a tonal monosyllabic corpus is generated.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub n_sets: usize,
    #[arg(long)]
    pub n_daughters: Option<usize>,
    /// Chance that a daughter reflex is attested (tonal corpus only).
    #[arg(long, default_value_t = 0.6)]
    pub attested: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output TSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Config file (or the experiment saved under `--out`), then flags.
pub fn resolve(a: &DataArgs) -> Result<ConfigFile> {
    let saved = a.out.join(EXPERIMENT_FILE);
    let mut c = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None if saved.is_file() => ConfigFile::load(&saved)?,
        None => ConfigFile::default(),
    };
    if let Some(d) = &a.dataset {
        c.dataset.path = Some(d.clone());
    }
    if let Some(p) = &a.preset {
        if c.model.preset.as_deref() != Some(p.as_str()) {
            // a new preset replaces pinned fields from an earlier run
            c.model = Default::default();
        }
        c.model.preset = Some(p.clone());
    }
    if let Some(s) = &a.seeds {
        c.run.seeds = Some(parse_seeds(s)?);
    }
    if let Some(p) = &a.proto_column {
        c.dataset.proto_column = Some(p.clone());
    }
    if a.strip_length {
        c.dataset.tokenizer.strip_length = true;
    }
    if a.strip_stress {
        c.dataset.tokenizer.stress = StressMode::Strip;
    }
    if a.orthographic {
        c.dataset.tokenizer.mode = ScriptMode::Orthographic;
    }
    if let Some(s) = a.split_seed {
        c.dataset.split_seed = s;
    }
    if let Some(e) = a.epochs {
        c.model.total_epochs = Some(e);
    }
    Ok(c)
}

fn resolve_eval(a: &EvalArgs) -> Result<ConfigFile> {
    let mut c = resolve(&a.data)?;
    if let Some(b) = &a.baselines {
        c.baselines.systems = Some(if b.trim() == "none" { vec![] } else { b.split(',').map(|s| s.trim().to_string()).collect() });
    }
    if a.corpar_context.is_some() {
        c.baselines.corpar_context = a.corpar_context.clone();
    }
    if a.svm_context.is_some() {
        c.baselines.svm_context = a.svm_context.clone();
    }
    Ok(c)
}

/// Runs one command, writing its report to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn std::io::Write) -> Result<()> {
    let mut emit = |s: &str| stdout.write_all(s.as_bytes()).map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e));
    match &cli.command {
        Command::Train(a) => emit(&commands::cmd_train(&resolve(a)?, &a.out)?),
        Command::Evaluate(a) => emit(&commands::cmd_evaluate(&resolve_eval(a)?, &a.data.out)?.to_text()),
        Command::Baseline(a) => emit(&commands::cmd_baseline(&resolve_eval(a)?, &a.data.out)?.to_text()),
        Command::Probe(a) => {
            let mut c = resolve(&a.data)?;
            if a.gold_tree.is_some() {
                c.probe.gold_tree = a.gold_tree.clone();
            }
            if a.threshold.is_some() {
                c.probe.threshold = a.threshold;
            }
            emit(&commands::cmd_probe(&c, &a.data.out)?)
        }
        Command::Gradcheck(a) => {
            let out = commands::cmd_gradcheck(&parse_seeds(&a.seeds)?, a.samples, 1.0)?;
            emit(&out.text)?;
            if out.passed {
                Ok(())
            } else {
                Err(CliError::Validation("gradient check failed".into()))
            }
        }
        Command::Synth(a) => {
            let tsv = commands::cmd_synth(&commands::SynthArgs {
                rules: a.rules.as_deref(),
                n_sets: a.n_sets,
                n_daughters: a.n_daughters,
                attested: a.attested,
                seed: a.seed,
            })?;
            match &a.out {
                Some(p) => write(p, &tsv),
                None => emit(&tsv),
            }
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => {
            let _ = lock.flush();
            0
        }
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
