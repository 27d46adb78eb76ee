use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use storyweave::config::{Config, Profile};
use storyweave::eval::{evaluate, load_tuples, synthetic_tuples, EvalReport, Method};
use storyweave::model::Premise;
use storyweave::orchestrator::{Mode, RunStatus, Runner, StoryArtifact, SCHEMA_VERSION};
use storyweave::plan::Planner;

const EXIT_DEGRADED: u8 = 2;
const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "storyweave", version, about = "Generate long stories from a premise")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate and write a plan only.
    Plan(RunArgs),
    /// Plan, draft, rerank and edit a full story.
    Generate(RunArgs),
    /// Rolling-window baseline.
    Rolling(RunArgs),
    /// Run the full pipeline and its ablations side by side.
    Ablate(RunArgs),
    /// Score contradiction detectors on labeled tuples.
    EvalEdit(EvalArgs),
    /// Sample premises.
    Premises(PremiseArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Config file, or "default" for the built-in values.
    #[arg(long, default_value = "default")]
    config: String,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides backend.profile.
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("premise_source").required(true).args(["premise", "premise_file"])))]
struct RunArgs {
    #[arg(long)]
    premise: Option<String>,
    #[arg(long)]
    premise_file: Option<PathBuf>,
    /// Record every generation request in the artifact.
    #[arg(long)]
    dump_prompts: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("tuple_source").required(true).args(["tuples", "synthetic"])))]
struct EvalArgs {
    /// JSON array of {id, s, s_prime, t, t_prime}.
    #[arg(long)]
    tuples: Option<PathBuf>,
    /// Use this many generated tuples instead of a file.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Comma-separated subset of entailment, entailment-dpr, structured.
    #[arg(long, value_delimiter = ',', default_value = "entailment,entailment-dpr,structured")]
    methods: Vec<Method>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PremiseArgs {
    #[arg(short = 'n', long, default_value_t = 1)]
    count: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Mock,
    Http,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn failed(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_FAILED,
        message: message.into(),
    }
}

fn load_config(c: &Common) -> Result<Config, Failure> {
    let mut config = if c.config == "default" {
        Config::default()
    } else {
        Config::load(Path::new(&c.config)).map_err(|e| usage(e.to_string()))?
    };
    if let Some(seed) = c.seed {
        config.run.seed = seed;
    }
    match c.profile {
        Some(ProfileArg::Mock) => config.backend.profile = Profile::Mock,
        Some(ProfileArg::Http) => config.backend.profile = Profile::Http,
        None => {}
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn read_premise(args: &RunArgs) -> Result<Premise, Failure> {
    let text = match (&args.premise, &args.premise_file) {
        (Some(p), None) => p.clone(),
        (None, Some(path)) => {
            std::fs::read_to_string(path).map_err(|e| usage(format!("reading premise file {}: {e}", path.display())))?
        }
        _ => return Err(usage("give exactly one of --premise and --premise-file")),
    };
    Premise::new(text).map_err(|e| usage(format!("invalid premise: {e}")))
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| failed(format!("creating {}: {e}", dir.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| failed(format!("writing {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| failed(e.to_string()))?;
    s.push('\n');
    write(path, &s)
}

fn runner(config: &Config) -> Result<Runner, Failure> {
    let backends = config.build_backends().map_err(|e| failed(format!("backends: {e}")))?;
    let templates = config.templates().map_err(|e| usage(e.to_string()))?;
    let bank = config.example_bank().map_err(|e| usage(e.to_string()))?;
    Ok(Runner::new(config.clone(), backends, templates, bank))
}

fn status_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Complete => 0,
        RunStatus::Degraded => EXIT_DEGRADED,
        RunStatus::Aborted => EXIT_FAILED,
    }
}

fn status_name(status: RunStatus) -> &'static str {
    match status {
        RunStatus::Complete => "complete",
        RunStatus::Degraded => "degraded",
        RunStatus::Aborted => "aborted",
    }
}

fn summary(a: &StoryArtifact) -> String {
    let mut s = format!(
        "{}: {} passages, {} tokens, {} unresolved flags, {} fallbacks",
        status_name(a.status),
        a.passages.len(),
        a.total_tokens(),
        a.unresolved_flags,
        a.fallbacks
    );
    if let Some(e) = &a.error {
        s.push_str(&format!(" ({e})"));
    }
    s
}

fn write_story(dir: &Path, a: &StoryArtifact) -> Result<(), Failure> {
    prepare_dir(dir)?;
    write_json(&dir.join("story.json"), a)?;
    let mut text = a.final_text.clone();
    text.push('\n');
    write(&dir.join("story.txt"), &text)
}

fn story(args: &RunArgs, mode: Mode) -> Result<u8, Failure> {
    let premise = read_premise(args)?;
    let mut config = load_config(&args.common)?;
    config.run.mode = mode;
    config.run.dump_prompts |= args.dump_prompts;
    let a = runner(&config)?.run(&premise);
    write_story(&args.common.output_dir, &a)?;
    println!(
        "{} -> {}",
        summary(&a),
        args.common.output_dir.join("story.json").display()
    );
    Ok(status_code(a.status))
}

fn plan(args: &RunArgs) -> Result<u8, Failure> {
    let premise = read_premise(args)?;
    let config = load_config(&args.common)?;
    let r = runner(&config)?;
    let plan = r.make_plan(&premise).map_err(|e| failed(e.to_string()))?;
    prepare_dir(&args.common.output_dir)?;
    let path = args.common.output_dir.join("plan.json");
    write_json(&path, &json!({ "schema_version": SCHEMA_VERSION, "plan": plan }))?;
    let leaves = storyweave::model::flatten_outline(&plan).len();
    println!(
        "plan: {} characters, {} outline points, {leaves} leaves -> {}",
        plan.characters.len(),
        plan.outline.len(),
        path.display()
    );
    Ok(0)
}

/// Pipeline variants compared by `ablate`, as (directory name, mode,
/// no_plan, no_rerank, no_edit).
const VARIANTS: &[(&str, Mode, bool, bool, bool)] = &[
    ("full", Mode::Planned, false, false, false),
    ("no-plan", Mode::Planned, true, false, false),
    ("no-rerank", Mode::Planned, false, true, false),
    ("no-edit", Mode::Planned, false, false, true),
    ("rolling", Mode::Rolling, false, false, false),
];

fn ablate(args: &RunArgs) -> Result<u8, Failure> {
    let premise = read_premise(args)?;
    let base = load_config(&args.common)?;
    let mut configs = Vec::new();
    for &(name, mode, no_plan, no_rerank, no_edit) in VARIANTS {
        let mut c = base.clone();
        c.run.mode = mode;
        c.run.dump_prompts |= args.dump_prompts;
        c.run.ablations.no_plan = no_plan;
        c.run.ablations.no_rerank = no_rerank;
        c.run.ablations.no_edit = no_edit;
        // Adaptive pacing needs the plan and the reranker.
        if no_plan || no_rerank {
            c.run.adaptive = false;
        }
        configs.push((name, c));
    }
    let results: Vec<(&str, Result<StoryArtifact, Failure>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(name, c)| {
                let premise = &premise;
                (*name, scope.spawn(move || runner(c).map(|r| r.run(premise))))
            })
            .collect();
        handles
            .into_iter()
            .map(|(name, h)| (name, h.join().unwrap_or_else(|_| Err(failed("run panicked")))))
            .collect()
    });
    let mut code = 0;
    for (name, result) in results {
        let a = result?;
        let dir = args.common.output_dir.join(name);
        write_story(&dir, &a)?;
        println!("{name:<10} {}", summary(&a));
        code = match (code, status_code(a.status)) {
            (EXIT_FAILED, _) | (_, EXIT_FAILED) => EXIT_FAILED,
            (a, b) => a.max(b),
        };
    }
    Ok(code)
}

fn eval_edit(args: &EvalArgs) -> Result<u8, Failure> {
    let config = load_config(&args.common)?;
    let tuples = match (&args.tuples, args.synthetic) {
        (Some(path), None) => load_tuples(path).map_err(|e| usage(e.to_string()))?,
        (None, Some(n)) if n > 0 => synthetic_tuples(n, config.run.seed),
        (None, Some(_)) => return Err(usage("--synthetic needs at least one tuple")),
        _ => return Err(usage("give exactly one of --tuples and --synthetic")),
    };
    let mut methods: Vec<Method> = Vec::new();
    for m in &args.methods {
        if !methods.contains(m) {
            methods.push(*m);
        }
    }
    let backends = config.build_backends().map_err(|e| failed(format!("backends: {e}")))?;
    let editor = storyweave::edit::Editor::new(
        backends.clone(),
        config.templates().map_err(|e| usage(e.to_string()))?,
        config.edit.clone(),
        config.example_bank().map_err(|e| usage(e.to_string()))?,
    );
    let report: EvalReport = evaluate(&tuples, &methods, &backends, &editor);
    prepare_dir(&args.common.output_dir)?;
    let path = args.common.output_dir.join("eval.json");
    write_json(&path, &json!({ "schema_version": SCHEMA_VERSION, "report": report }))?;
    print!("{}", report.table());
    println!("{} tuples, {} pairs -> {}", report.tuples, report.pairs, path.display());
    let incomplete = report.results.iter().any(|r| r.auc.is_none() || r.excluded > 0);
    Ok(if incomplete { EXIT_DEGRADED } else { 0 })
}

fn premises(args: &PremiseArgs) -> Result<u8, Failure> {
    let config = load_config(&args.common)?;
    let backends = config.build_backends().map_err(|e| failed(format!("backends: {e}")))?;
    let templates = config.templates().map_err(|e| usage(e.to_string()))?;
    let planner = Planner {
        backends: &backends,
        templates: &templates,
        cfg: &config.plan,
    };
    for p in planner
        .generate_premises(args.count)
        .map_err(|e| failed(e.to_string()))?
    {
        println!("{p}");
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Plan(a) => plan(a),
        Command::Generate(a) => story(a, Mode::Planned),
        Command::Rolling(a) => story(a, Mode::Rolling),
        Command::Ablate(a) => ablate(a),
        Command::EvalEdit(a) => eval_edit(a),
        Command::Premises(a) => premises(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            if f.code == EXIT_USAGE {
                eprintln!("run with --help for usage");
            }
            ExitCode::from(f.code)
        }
    }
}
