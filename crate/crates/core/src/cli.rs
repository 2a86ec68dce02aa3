//! Command-line front end: `dissect`, `score`, `synth` and `report`.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or file format, 3 data validation.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::datastore::{write_activations, write_catalog, write_masks, Dataset, DEFAULT_MIN_SAMPLES};
use crate::error::{Error, Result};
use crate::forms::parse_form;
use crate::report::{dissect, reports_from_json, reports_to_json, summarize, DissectOptions};
use crate::scoring::{detacc_score, format_score, iou_score, unit_masks, UpsampleMode, DEFAULT_QUANTILE};
use crate::search::{Operator, SearchConfig, SelectionRule, StoppingRule, DEFAULT_BEAM_SIZE, DEFAULT_MAX_LENGTH};
use crate::synth::{gen_fixture, random_chain_form, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "compexp", version, about = "Compositional neuron explanations scored by IoU and Detection Accuracy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain every unit of an activation store and write a JSON report
    Dissect(DissectArgs),
    /// Print IoU and DetAcc of one unit on one explanation
    Score(ScoreArgs),
    /// Generate a synthetic dataset with known unit explanations
    Synth(SynthArgs),
    /// Summarize a dissect report as CSV with IoU/DetAcc correlations
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Annotation masks (CEXM)
    #[arg(long)]
    pub masks: PathBuf,
    /// Unit activations (CEXA)
    #[arg(long)]
    pub acts: PathBuf,
    /// Concept catalog CSV
    #[arg(long)]
    pub catalog: PathBuf,
    /// Top quantile defining the unit threshold
    #[arg(long, default_value_t = DEFAULT_QUANTILE)]
    pub quantile: f64,
    #[arg(long, value_enum, default_value_t = UpsampleArg::BilinearCorners)]
    pub upsample: UpsampleArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UpsampleArg {
    BilinearCorners,
    Nearest,
}

impl From<UpsampleArg> for UpsampleMode {
    fn from(a: UpsampleArg) -> Self {
        match a {
            UpsampleArg::BilinearCorners => UpsampleMode::BilinearCorners,
            UpsampleArg::Nearest => UpsampleMode::Nearest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectArg {
    Iou,
    Detacc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StopArg {
    None,
    DetaccDrop,
}

#[derive(Debug, Args)]
pub struct DissectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_BEAM_SIZE)]
    pub beam_size: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LENGTH)]
    pub max_length: usize,
    /// Rule picking the reported explanation among the per-length bests
    #[arg(long, value_enum, default_value_t = SelectArg::Detacc)]
    pub select: SelectArg,
    /// Length-growth stopping rule
    #[arg(long, value_enum, default_value_t = StopArg::None)]
    pub stop: StopArg,
    /// DetAcc drop tolerated by `--stop detacc-drop`
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Consecutive dropping lengths before `--stop detacc-drop` fires
    #[arg(long, default_value_t = 1)]
    pub patience: usize,
    /// Also extend beam forms with `OR NOT c`
    #[arg(long)]
    pub or_not: bool,
    /// Compute DetAcc for the whole final beam
    #[arg(long)]
    pub detacc_all: bool,
    /// Concepts annotated on fewer images are excluded from search
    #[arg(long, default_value_t = DEFAULT_MIN_SAMPLES)]
    pub min_samples: u32,
    /// Worker threads across units (default: available parallelism)
    #[arg(long, env = "DISSECT_JOBS")]
    pub jobs: Option<usize>,
    /// Report path; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl DissectArgs {
    pub fn options(&self) -> DissectOptions {
        let mut operators = Operator::DEFAULT_SET.to_vec();
        if self.or_not {
            operators.push(Operator::OrNot);
        }
        DissectOptions {
            quantile: self.input.quantile,
            upsample: self.input.upsample.into(),
            min_samples: self.min_samples,
            search: SearchConfig {
                beam_size: self.beam_size,
                max_length: self.max_length,
                operators,
                selection: match self.select {
                    SelectArg::Iou => SelectionRule::MaxIou,
                    SelectArg::Detacc => SelectionRule::MaxDetAcc,
                },
                stopping: match self.stop {
                    StopArg::None => StoppingRule::None,
                    StopArg::DetaccDrop => StoppingRule::DetAccDrop {
                        epsilon: self.epsilon,
                        patience: self.patience,
                    },
                },
                detacc_all: self.detacc_all,
            },
            jobs: self.jobs.unwrap_or_else(|| {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            }),
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub unit: u32,
    /// Explanation, e.g. `(water OR river) AND NOT sky`
    #[arg(long)]
    pub form: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving masks.cexm, acts.cexa, catalog.csv and truth.json
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub images: usize,
    #[arg(long, default_value_t = 16)]
    pub units: usize,
    #[arg(long, default_value_t = 20)]
    pub concepts: usize,
    #[arg(long, default_value_t = 0.3)]
    pub density: f64,
    #[arg(long, default_value_t = 56)]
    pub mask_height: u16,
    #[arg(long, default_value_t = 56)]
    pub mask_width: u16,
    #[arg(long, default_value_t = 7)]
    pub act_height: u16,
    #[arg(long, default_value_t = 7)]
    pub act_width: u16,
    /// Ground-truth forms have 1 to this many concepts
    #[arg(long, default_value_t = 3)]
    pub max_truth_length: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gain: f64,
    /// Snap blobs to the activation grid
    #[arg(long)]
    pub snap: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON report written by `dissect`
    #[arg(long)]
    pub report: PathBuf,
    /// CSV path; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct TruthEntry {
    unit_id: u32,
    form: String,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => write_file(path, text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn load(input: &InputArgs) -> Result<Dataset> {
    Dataset::load(&input.masks, &input.acts, &input.catalog)
}

pub fn cmd_dissect(args: &DissectArgs, stdout: &mut dyn Write) -> Result<()> {
    let dataset = load(&args.input)?;
    let reports = dissect(&dataset, &args.options())?;
    emit(&args.out, &reports_to_json(&reports), stdout)
}

pub fn cmd_score(args: &ScoreArgs, stdout: &mut dyn Write) -> Result<()> {
    let dataset = load(&args.input)?;
    let form = parse_form(&args.form, &dataset.catalog)?;
    let unit = unit_masks(
        &dataset.activations,
        &dataset.annotations,
        args.unit,
        args.input.quantile,
        args.input.upsample.into(),
    )?;
    let iou = iou_score(&unit, &form, &dataset.annotations)?;
    let detacc = match detacc_score(&unit, &form, &dataset.annotations) {
        Ok(s) => s.to_string(),
        Err(Error::NoSupport) => "no-support".to_string(),
        Err(e) => return Err(e),
    };
    writeln!(stdout, "iou={} detacc={detacc}", format_score(iou.value())).map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_synth(args: &SynthArgs, stdout: &mut dyn Write) -> Result<()> {
    if args.max_truth_length == 0 {
        return Err(Error::InvalidSpec("max truth length must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    rng.set_stream(u64::MAX);
    let forms: Vec<_> = (0..args.units)
        .map(|i| {
            let length = 1 + i % args.max_truth_length;
            random_chain_form(&mut rng, args.concepts.max(1), length, &Operator::DEFAULT_SET)
        })
        .collect();
    let spec = SynthSpec {
        seed: args.seed,
        image_count: args.images,
        mask_dims: (args.mask_height, args.mask_width),
        act_dims: (args.act_height, args.act_width),
        concept_count: args.concepts,
        concept_density: args.density,
        ground_truth: forms.first().cloned().unwrap_or_else(|| crate::forms::LogicalForm::leaf(0)),
        noise_sigma: args.sigma,
        activation_gain: args.gain,
        snap_to_grid: args.snap,
    };
    let dataset = gen_fixture(&spec, &forms)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    write_masks(args.out_dir.join("masks.cexm"), &dataset.annotations)?;
    write_activations(args.out_dir.join("acts.cexa"), &dataset.activations)?;
    write_catalog(args.out_dir.join("catalog.csv"), &dataset.catalog)?;
    let truth = forms
        .iter()
        .enumerate()
        .map(|(i, f)| {
            Ok(TruthEntry {
                unit_id: i as u32,
                form: f.to_text(&dataset.catalog)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut json = serde_json::to_string_pretty(&truth).expect("truth serializes");
    json.push('\n');
    write_file(&args.out_dir.join("truth.json"), &json)?;
    writeln!(
        stdout,
        "wrote {} images, {} concepts, {} units to {}",
        args.images,
        args.concepts,
        args.units,
        args.out_dir.display()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_report(args: &ReportArgs, stdout: &mut dyn Write) -> Result<()> {
    let text = fs::read_to_string(&args.report).map_err(|e| Error::io(&args.report, e))?;
    let reports = reports_from_json(&text)?;
    emit(&args.out, &summarize(&reports).csv, stdout)
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Dissect(a) => cmd_dissect(a, stdout),
        Command::Score(a) => cmd_score(a, stdout),
        Command::Synth(a) => cmd_synth(a, stdout),
        Command::Report(a) => cmd_report(a, stdout),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(rendered.as_bytes())
            } else {
                stderr.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
