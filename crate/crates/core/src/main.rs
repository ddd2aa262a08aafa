use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use scene_forest::dataset::{load_scene_record, write_synthetic_dataset, DatasetError, GeneratorConfig};
use scene_forest::pipeline::{run_scene_file, scene_triplets, PipelineError};
use scene_forest::reorganize::{serialize_tree, Backend, BackendConfig};
use scene_forest::tree::{build_tree, to_dot};

/// Environment variable that replaces the remote endpoint.
const ENDPOINT_ENV: &str = "SCENE_FOREST_ENDPOINT";

#[derive(Parser)]
#[command(name = "scene-forest", version, about = "Scene trees from spatial captions, task reorganization and pick-and-place plans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Rule,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum TreeFormat {
    Text,
    Dot,
}

#[derive(Subcommand)]
enum Command {
    /// Print the triplets parsed from a scene's captions, one JSON object per line.
    Parse { scene: PathBuf },
    /// Print the scene tree built from a scene file.
    Tree {
        scene: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: TreeFormat,
    },
    /// Build, reorganize and plan one scene (or every scene in --batch).
    Pipeline {
        #[arg(required_unless_present = "batch", conflicts_with = "batch")]
        scene: Option<PathBuf>,
        /// Directory of scene files processed concurrently; outputs go to <out>/<file stem>/.
        #[arg(long)]
        batch: Option<PathBuf>,
        #[arg(long)]
        task: String,
        #[arg(long, value_enum, default_value = "rule")]
        backend: BackendArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
        #[arg(long, default_value_t = 2)]
        max_retries: u32,
    },
    /// Write synthetic scene files.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        count: u64,
        #[arg(long)]
        out: PathBuf,
        /// Generator configuration as JSON; --seed overrides its seed.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn dataset_exit(e: &DatasetError) -> u8 {
    match e {
        DatasetError::Io { .. } => 2,
        _ => 3,
    }
}

fn report(scene: &Path, e: &PipelineError) -> u8 {
    match e.span() {
        Some(span) => eprintln!("{}: error [{}..{}]: {e}", scene.display(), span.start, span.end),
        None => eprintln!("{}: error: {e}", scene.display()),
    }
    e.exit_code() as u8
}

fn cmd_parse(scene: &Path) -> u8 {
    let result = load_scene_record(scene).map_err(PipelineError::from).and_then(|r| scene_triplets(&r));
    match result {
        Ok((triplets, diagnostics)) => {
            for d in diagnostics {
                eprintln!("{}: {d}", scene.display());
            }
            for t in triplets {
                println!("{}", serde_json::to_string(&t).expect("triplets serialize"));
            }
            0
        }
        Err(e) => report(scene, &e),
    }
}

fn cmd_tree(scene: &Path, format: TreeFormat) -> u8 {
    let result = load_scene_record(scene).map_err(PipelineError::from).and_then(|record| {
        let (triplets, _) = scene_triplets(&record)?;
        build_tree(&triplets, &record.objects, None).into_result().map_err(PipelineError::Tree)
    });
    match result {
        Ok(tree) => {
            match format {
                TreeFormat::Text => print!("{}", serialize_tree(&tree)),
                TreeFormat::Dot => print!("{}", to_dot(&tree)),
            }
            0
        }
        Err(e) => report(scene, &e),
    }
}

fn backend_config(backend: BackendArg, endpoint: Option<String>, model: Option<String>, timeout: f64, max_retries: u32) -> BackendConfig {
    let endpoint = std::env::var(ENDPOINT_ENV).ok().filter(|e| !e.is_empty()).or(endpoint);
    BackendConfig {
        backend: match backend {
            BackendArg::Rule => Backend::Rule,
            BackendArg::Remote => Backend::Remote,
        },
        endpoint_url: endpoint,
        model_name: model,
        timeout_seconds: timeout,
        max_retries,
    }
}

fn run_one(scene: &Path, task: &str, config: &BackendConfig, out: &Path) -> u8 {
    match run_scene_file(scene, task, config, out) {
        Ok(outcome) => {
            for d in &outcome.result.diagnostics {
                eprintln!("{}: {d}", scene.display());
            }
            print!("{}", outcome.plan);
            0
        }
        Err(e) => report(scene, &e),
    }
}

fn run_batch(dir: &Path, task: &str, config: &BackendConfig, out: &Path) -> u8 {
    let entries = match std::fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) => {
            eprintln!("{}: error: {e}", dir.display());
            return 2;
        }
    };
    let mut scenes: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    scenes.sort();
    let codes: Vec<(PathBuf, u8)> = scenes
        .par_iter()
        .map(|scene| {
            let stem = scene.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
            let code = match run_scene_file(scene, task, config, &out.join(stem)) {
                Ok(_) => 0,
                Err(e) => report(scene, &e),
            };
            (scene.clone(), code)
        })
        .collect();
    for (scene, code) in &codes {
        println!("{}\t{code}", scene.display());
    }
    codes.iter().map(|(_, c)| *c).find(|c| *c != 0).unwrap_or(0)
}

fn cmd_gen(seed: u64, count: u64, out: &Path, config: Option<&Path>) -> u8 {
    let mut generator = match config {
        None => GeneratorConfig::default(),
        Some(path) => match std::fs::read_to_string(path) {
            Err(e) => {
                eprintln!("{}: error: {e}", path.display());
                return 2;
            }
            Ok(text) => match serde_json::from_str(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{}: error: {e}", path.display());
                    return 3;
                }
            },
        },
    };
    generator.seed = seed;
    if let Err(e) = generator.validate() {
        eprintln!("generator config: {e}");
        return 3;
    }
    match write_synthetic_dataset(&generator, count, out) {
        Ok(paths) => {
            eprintln!("wrote {} scenes to {}", paths.len(), out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            dataset_exit(&e)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Parse { scene } => cmd_parse(&scene),
        Command::Tree { scene, format } => cmd_tree(&scene, format),
        Command::Pipeline { scene, batch, task, backend, out, endpoint, model, timeout, max_retries } => {
            let config = backend_config(backend, endpoint, model, timeout, max_retries);
            match (scene, batch) {
                (_, Some(dir)) => run_batch(&dir, &task, &config, &out),
                (Some(scene), None) => run_one(&scene, &task, &config, &out),
                (None, None) => unreachable!("clap requires a scene or --batch"),
            }
        }
        Command::Gen { seed, count, out, config } => cmd_gen(seed, count, &out, config.as_deref()),
    };
    ExitCode::from(code)
}
