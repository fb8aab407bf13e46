use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use instreval::conditioning::{emit_pairs, write_pairs, DatasetIndex, PairingConfig, Scheme};
use instreval::metrics::{build_ground_stats, clap_score, fad, tc, ClapMode, FadOptions, TcReference};
use instreval::refsynth::{t2i_score, PromptEmbedding, SynthMethod, SynthOptions};
use instreval::report::MetricReport;
use instreval::selftest::run_selftest;
use instreval::store::{
    load_population, load_stats, save_stats, synth_population, write_population, Coverage, EmbeddingSet, GroundStats,
    Manifest, SynthPreset, SynthSpec,
};
use instreval::{Error, Result};

#[derive(Parser)]
#[command(name = "instreval", version, about = "Objective metrics for sample-based instruments")]
struct Cli {
    /// Print the structured JSON report instead of a table.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fréchet distance between the Gaussian fits of two populations.
    Fad(FadArgs),
    /// Timbral consistency against a paired reference or ground statistics.
    Tc(TcArgs),
    /// Average CLAP score between paired populations.
    Clapscore(ClapArgs),
    /// CLAP score of generated instruments against references synthesized from text prompts.
    T2iScore(T2iArgs),
    /// Average cosine grid and mean embeddings over a reference population.
    BuildStats(BuildStatsArgs),
    /// Simulate conditioning pairs for every sample of a manifest.
    Pairgen(PairgenArgs),
    /// Write a synthetic population.
    Synth(SynthArgs),
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Args)]
struct FadArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Use the `+Tr((A1 A2)^1/2)` cross term.
    #[arg(long)]
    paper_literal: bool,
    #[arg(long, default_value_t = 0)]
    ddof: usize,
}

#[derive(Args)]
struct TcArgs {
    /// Paired reference population (without --star).
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    test: PathBuf,
    /// Compare against the averaged ground grid from --stats.
    #[arg(long)]
    star: bool,
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClapModeArg {
    PerSample,
    PerInstrument,
}

#[derive(Args)]
struct ClapArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum, default_value = "per-sample")]
    mode: ClapModeArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Naive,
    Translation,
    Coloration,
}

impl From<MethodArg> for SynthMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Naive => SynthMethod::Naive,
            MethodArg::Translation => SynthMethod::Translation,
            MethodArg::Coloration => SynthMethod::Coloration,
        }
    }
}

#[derive(Args)]
struct T2iArgs {
    /// Single-record prompt file.
    #[arg(long, conflicts_with = "prompt_dir", required_unless_present = "prompt_dir")]
    prompt: Option<PathBuf>,
    /// Generated single-instrument population for --prompt.
    #[arg(long, requires = "prompt")]
    generated: Option<PathBuf>,
    /// Directory of prompt manifests; each is paired with the same file name in --generated-dir.
    #[arg(long, requires = "generated_dir")]
    prompt_dir: Option<PathBuf>,
    #[arg(long)]
    generated_dir: Option<PathBuf>,
    #[arg(long)]
    stats: PathBuf,
    #[arg(long, value_enum, default_value = "coloration")]
    method: MethodArg,
    /// Shift templates by `mu - z_t` instead of `z_t - mu`.
    #[arg(long)]
    paper_literal: bool,
}

#[derive(Args)]
struct BuildStatsArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Baseline,
    Random,
    Fixed,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Baseline => Scheme::Baseline,
            SchemeArg::Random => Scheme::Random,
            SchemeArg::Fixed => Scheme::Fixed,
        }
    }
}

#[derive(Args)]
struct PairgenArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of dropping each metadata tag.
    #[arg(long, default_value_t = 0.3)]
    drop: f64,
    /// Family for every instrument under the fixed scheme, overriding manifest tags.
    #[arg(long)]
    family: Option<String>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Iid,
    Clustered,
    Replicated,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    preset: PresetArg,
    #[arg(long, default_value_t = 16)]
    dz: usize,
    #[arg(long, default_value_t = 4)]
    instruments: usize,
    /// Cells per instrument, drawn at random; full grid when omitted.
    #[arg(long)]
    cells: Option<usize>,
    /// Noise scale around each instrument's center for the clustered preset.
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Manifest path; the data file is written next to it with a `.bin` extension.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let json = cli.json;
    match cli.command {
        Command::Fad(args) => emit(cmd_fad(&args)?, json),
        Command::Tc(args) => emit(cmd_tc(&args)?, json),
        Command::Clapscore(args) => emit(cmd_clapscore(&args)?, json),
        Command::T2iScore(args) => emit(cmd_t2i(&args)?, json),
        Command::BuildStats(args) => emit(cmd_build_stats(&args)?, json),
        Command::Pairgen(args) => emit(cmd_pairgen(&args)?, json),
        Command::Synth(args) => emit(cmd_synth(&args)?, json),
        Command::Selftest => {
            let report = run_selftest();
            print(if json { report.to_json() } else { report.to_table() })?;
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn emit(report: MetricReport, json: bool) -> Result<ExitCode> {
    for w in report.warnings() {
        eprintln!("warning: {w}");
    }
    print(if json { report.to_json() } else { report.to_table() })?;
    Ok(ExitCode::SUCCESS)
}

fn print(text: String) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::Invalid(format!("writing standard output: {e}")))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{} does not exist or is not a file", path.display())))
    }
}

fn load(path: &Path) -> Result<EmbeddingSet> {
    Ok(load_population(path, false)?)
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn cmd_fad(args: &FadArgs) -> Result<MetricReport> {
    require_file(&args.reference)?;
    require_file(&args.test)?;
    let options = FadOptions {
        paper_literal: args.paper_literal,
        ddof: args.ddof,
    };
    let mut report = fad(&load(&args.reference)?, &load(&args.test)?, options)?;
    report.set("reference_path", path_str(&args.reference));
    report.set("test_path", path_str(&args.test));
    Ok(report)
}

fn cmd_tc(args: &TcArgs) -> Result<MetricReport> {
    let mut report = if args.star {
        let stats_path = args
            .stats
            .as_ref()
            .ok_or_else(|| Error::Invalid("--star requires --stats".into()))?;
        if args.reference.is_some() {
            return Err(Error::Invalid("--star compares against --stats; drop --reference".into()));
        }
        require_file(stats_path)?;
        require_file(&args.test)?;
        let stats = load_stats(stats_path)?;
        let mut r = tc(TcReference::Ground(&stats.cosine), &load(&args.test)?)?;
        r.set("stats_path", path_str(stats_path));
        r.set("stats_instruments", stats.instruments);
        r
    } else {
        let reference = args
            .reference
            .as_ref()
            .ok_or_else(|| Error::Invalid("tc requires --reference, or --star with --stats".into()))?;
        if args.stats.is_some() {
            return Err(Error::Invalid("--stats is only used with --star".into()));
        }
        require_file(reference)?;
        require_file(&args.test)?;
        let mut r = tc(TcReference::Paired(&load(reference)?), &load(&args.test)?)?;
        r.set("reference_path", path_str(reference));
        r
    };
    report.set("test_path", path_str(&args.test));
    Ok(report)
}

fn cmd_clapscore(args: &ClapArgs) -> Result<MetricReport> {
    require_file(&args.reference)?;
    require_file(&args.test)?;
    let mode = match args.mode {
        ClapModeArg::PerSample => ClapMode::PerSample,
        ClapModeArg::PerInstrument => ClapMode::PerInstrument,
    };
    let mut report = clap_score(&load(&args.reference)?, &load(&args.test)?, mode)?;
    report.set("reference_path", path_str(&args.reference));
    report.set("test_path", path_str(&args.test));
    Ok(report)
}

fn cmd_t2i(args: &T2iArgs) -> Result<MetricReport> {
    require_file(&args.stats)?;
    let options = SynthOptions {
        method: args.method.into(),
        paper_literal: args.paper_literal,
    };
    let stats = load_stats(&args.stats)?;
    let score = |prompt: &Path, generated: &Path, stats: &GroundStats| -> Result<MetricReport> {
        require_file(prompt)?;
        require_file(generated)?;
        let p = PromptEmbedding::load(prompt)?;
        let g = load_population(generated, true)?;
        let mut r = t2i_score(&p, &g, &stats.means, &stats.cosine, options)?;
        r.set("prompt_path", path_str(prompt));
        r.set("generated_path", path_str(generated));
        Ok(r)
    };

    let mut report = match (&args.prompt, &args.prompt_dir) {
        (Some(prompt), None) => {
            let generated = args
                .generated
                .as_ref()
                .ok_or_else(|| Error::Invalid("--prompt requires --generated".into()))?;
            score(prompt, generated, &stats)?
        }
        (None, Some(dir)) => {
            let gen_dir = args
                .generated_dir
                .as_ref()
                .ok_or_else(|| Error::Invalid("--prompt-dir requires --generated-dir".into()))?;
            batch_t2i(dir, gen_dir, &stats, options, &score)?
        }
        _ => return Err(Error::Invalid("pass either --prompt or --prompt-dir".into())),
    };
    report.set("stats_path", path_str(&args.stats));
    Ok(report)
}

/// Mean over prompts of the per-prompt score; per_instrument is keyed by prompt file stem.
fn batch_t2i(
    prompt_dir: &Path,
    generated_dir: &Path,
    stats: &GroundStats,
    options: SynthOptions,
    score: &dyn Fn(&Path, &Path, &GroundStats) -> Result<MetricReport>,
) -> Result<MetricReport> {
    let mut prompts: Vec<PathBuf> = fs::read_dir(prompt_dir)
        .map_err(|e| Error::Invalid(format!("reading {}: {e}", prompt_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    prompts.sort();
    if prompts.is_empty() {
        return Err(Error::Invalid(format!("no prompt manifests in {}", prompt_dir.display())));
    }
    let mut per_prompt = std::collections::BTreeMap::new();
    let mut cells = serde_json::Map::new();
    for prompt in &prompts {
        let name = prompt.file_name().expect("listed file");
        let stem = prompt.file_stem().expect("listed file").to_string_lossy().into_owned();
        let r = score(prompt, &generated_dir.join(name), stats)?;
        cells.insert(stem.clone(), r.config["matched_cell"].clone());
        per_prompt.insert(stem, r.value);
    }
    let value = per_prompt.values().sum::<f64>() / per_prompt.len() as f64;
    let mut report = MetricReport::new("t2i_clap_score_star", value);
    report.set("method", options.method);
    report.set("paper_literal", options.paper_literal);
    report.set("prompts", per_prompt.len());
    report.set("aggregation", "mean over prompts");
    report.set("matched_cells", cells);
    report.set("prompt_dir", path_str(prompt_dir));
    report.set("generated_dir", path_str(generated_dir));
    Ok(report.with_per_instrument(per_prompt))
}

fn cmd_build_stats(args: &BuildStatsArgs) -> Result<MetricReport> {
    require_file(&args.reference)?;
    let reference = load_population(&args.reference, true)?;
    let stats = build_ground_stats(&reference)?;
    save_stats(&stats, &args.out)?;
    let covered = stats.cosine.count.iter().filter(|&&c| c > 0).count();
    let mut report = MetricReport::new("build_stats", stats.instruments as f64);
    report.set("reference_path", path_str(&args.reference));
    report.set("out", path_str(&args.out));
    report.set("instruments", stats.instruments);
    report.set("dz", stats.means.dz());
    report.set("available_cells", stats.means.available_cells().count());
    report.set("covered_entries", covered);
    Ok(report)
}

fn cmd_pairgen(args: &PairgenArgs) -> Result<MetricReport> {
    require_file(&args.manifest)?;
    let manifest = Manifest::read(&args.manifest)?;
    let index = DatasetIndex::from_manifest(&manifest);
    let scheme: Scheme = args.scheme.into();
    let mut config = PairingConfig::new(scheme, args.seed);
    config.p_drop = args.drop;
    config.family = args.family.clone();
    let pairs = emit_pairs(&index, &config)?;

    let io_err = |e: io::Error| Error::Invalid(format!("writing pairs: {e}"));
    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
            write_pairs(&mut w, &pairs, scheme, args.seed).map_err(io_err)?;
            w.flush().map_err(io_err)?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            write_pairs(&mut w, &pairs, scheme, args.seed).map_err(io_err)?;
            w.flush().map_err(io_err)?;
            // The records are the output; no report follows them.
            std::process::exit(0);
        }
    }
    let mut report = MetricReport::new("pairgen", pairs.len() as f64);
    report.set("manifest_path", path_str(&args.manifest));
    report.set("scheme", scheme);
    report.set("seed", args.seed);
    report.set("drop", args.drop);
    report.set("family_override", &args.family);
    report.set("fixed_velocity", config.table.velocity);
    report.set("records", pairs.len());
    report.set("out", args.out.as_ref().map(|p| path_str(p)));
    Ok(report)
}

fn cmd_synth(args: &SynthArgs) -> Result<MetricReport> {
    let preset = match args.preset {
        PresetArg::Iid => SynthPreset::IidGaussianNormalized,
        PresetArg::Clustered => SynthPreset::ClusteredPerInstrument { spread: args.spread },
        PresetArg::Replicated => SynthPreset::ReplicatedSingleVector,
    };
    let coverage = match args.cells {
        Some(cells) => Coverage::Count { cells },
        None => Coverage::Full,
    };
    let spec = SynthSpec {
        preset,
        dz: args.dz,
        instruments: args.instruments,
        coverage,
    };
    let set = synth_population(&spec, args.seed)?;
    let data_file = args
        .out
        .with_extension("bin")
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("{} has no file name", args.out.display())))?
        .to_string_lossy()
        .into_owned();
    write_population(&set, &args.out, &data_file)?;
    let mut report = MetricReport::new("synth", set.len() as f64);
    report.set("spec", &spec);
    report.set("seed", args.seed);
    report.set("out", path_str(&args.out));
    report.set("data_file", data_file);
    report.set("samples", set.len());
    Ok(report)
}
