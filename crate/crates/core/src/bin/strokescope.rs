use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use strokescope::service::{self, handle_job, JobRequest, JobResponse, ModelRegistry, Operation, ServeOptions};
use strokescope::sketch::{parse_vector_sketch, SketchFormat};

#[derive(Parser)]
#[command(name = "strokescope", version, about = "Stroke and point attribution for vector sketches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Stroke5,
    Stroke3,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sla,
    Psla,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Sla => "sla",
            Mode::Psla => "psla",
        }
    }
}

#[derive(Args)]
struct SketchArgs {
    /// Sketch file, or `-` for stdin.
    sketch: String,
    #[arg(long, value_enum, default_value = "stroke5")]
    format: Format,
}

#[derive(Args)]
struct RenderArgs {
    /// Offset of the soft renderer.
    #[arg(long)]
    a: Option<f64>,
    /// Slope of the soft renderer.
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterise a sketch to PNG.
    Render {
        #[command(flatten)]
        input: SketchArgs,
        #[arg(short, long, default_value = "render.png")]
        output: PathBuf,
        /// Use the differentiable renderer.
        #[arg(long)]
        soft: bool,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Per-stroke (sla) or per-point (psla) attribution.
    Attribute {
        #[command(flatten)]
        input: SketchArgs,
        #[arg(long, value_enum, default_value = "sla")]
        mode: Mode,
        #[arg(long)]
        model: String,
        /// predicted | class:N | loss:N | embedding_sum | gallery:ID
        #[arg(long, default_value = "predicted")]
        target: String,
        /// Give every stroke the whole image (degenerate weighting).
        #[arg(long)]
        uniform_weights: bool,
        /// Directory for scores.json, overlay.svg and heatmap.png.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Remove strokes or segments that attribution marks as noise.
    Filter {
        #[command(flatten)]
        input: SketchArgs,
        #[arg(long)]
        model: String,
        /// gallery:ID, or a JSON file holding the reference embedding.
        #[arg(long)]
        reference: String,
        #[arg(long, value_enum, default_value = "sla")]
        mode: Mode,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        stochastic: bool,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the filtered stroke-5 sketch.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Stroke- or point-removal attack against a classifier.
    Attack {
        #[command(flatten)]
        input: SketchArgs,
        #[arg(long, value_enum, default_value = "sla")]
        mode: Mode,
        #[arg(long, default_value_t = 5)]
        epsilon: usize,
        #[arg(long)]
        model: String,
        /// Ground-truth class (index or name); defaults to the clean prediction.
        #[arg(long)]
        label: Option<String>,
        /// Rank points by attribution instead of leave-one-out re-renders.
        #[arg(long)]
        fast: bool,
    },
    /// Correlate attribution order with drawing order for a retrieval query.
    Reliability {
        #[command(flatten)]
        input: SketchArgs,
        #[arg(long)]
        model: String,
        #[arg(long, value_enum, default_value = "sla")]
        mode: Mode,
        /// Gallery id of the true match, to report its rank.
        #[arg(long)]
        true_id: Option<String>,
        #[arg(long)]
        kendall: bool,
    },
    /// Train a toy classifier or embedding on synthetic shapes.
    Train {
        #[arg(long, default_value = "classifier")]
        kind: String,
        #[arg(short, long)]
        output: PathBuf,
        /// Sketches per class (classifier) or a third of the pair count (embedding).
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Also write a gallery of this many photo embeddings (embedding only).
        #[arg(long)]
        gallery: Option<usize>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Defaults to the STROKESCOPE_MODELS_DIR environment variable.
        #[arg(long)]
        models_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
    },
}

type CliResult<T> = Result<T, String>;

fn read_sketch(args: &SketchArgs) -> CliResult<Value> {
    let mut data = Vec::new();
    if args.sketch == "-" {
        std::io::stdin().read_to_end(&mut data).map_err(|e| format!("stdin: {e}"))?;
    } else {
        data = std::fs::read(&args.sketch).map_err(|e| format!("{}: {e}", args.sketch))?;
    }
    let format = match args.format {
        Format::Stroke5 => SketchFormat::Stroke5Json,
        Format::Stroke3 => SketchFormat::Stroke3Ndjson,
    };
    let sketch = parse_vector_sketch(&data, format).map_err(|e| format!("{}: {e}", args.sketch))?;
    Ok(sketch.to_stroke5_value())
}

fn render_params(p: &mut Map<String, Value>, r: &RenderArgs) {
    if let Some(a) = r.a {
        p.insert("a".into(), json!(a));
    }
    if let Some(b) = r.b {
        p.insert("b".into(), json!(b));
    }
}

fn run_job(registry: &ModelRegistry, req: JobRequest) -> CliResult<JobResponse> {
    handle_job(registry, &req).map_err(|e| format!("{}: {}", e.code, e.message))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn artifact(resp: &JobResponse, name: &str) -> Vec<u8> {
    resp.artifacts.iter().find(|a| a.name == name).map(|a| a.bytes()).unwrap_or_default()
}

fn print(v: &Value) {
    // a closed pipe downstream is not an error worth reporting
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn run(cli: Cli) -> CliResult<()> {
    let registry = ModelRegistry::from_env().map_err(|e| e.message)?.allow_paths(true);
    let job = |operation, sketch: Option<Value>, model: Option<String>, params: Map<String, Value>| JobRequest {
        operation,
        sketch,
        model,
        params,
    };
    match cli.command {
        Command::Render { input, output, soft, render } => {
            let mut p = Map::new();
            p.insert("renderer".into(), json!(if soft { "soft" } else { "hard" }));
            render_params(&mut p, &render);
            let resp = run_job(&registry, job(Operation::Render, Some(read_sketch(&input)?), None, p))?;
            write(&output, &artifact(&resp, "render.png"))?;
            print(&resp.payload);
        }
        Command::Attribute { input, mode, model, target, uniform_weights, output, render } => {
            let mut p = Map::new();
            p.insert("mode".into(), json!(mode.as_str()));
            p.insert("target".into(), json!(target));
            p.insert("uniform_weights".into(), json!(uniform_weights));
            render_params(&mut p, &render);
            let resp = run_job(&registry, job(Operation::Attribute, Some(read_sketch(&input)?), Some(model), p))?;
            match output {
                Some(dir) => {
                    for a in &resp.artifacts {
                        write(&dir.join(&a.name), &a.bytes())?;
                    }
                    eprintln!("wrote {} artifacts to {}", resp.artifacts.len(), dir.display());
                }
                None => print(&resp.payload),
            }
        }
        Command::Filter { input, model, reference, mode, delta, stochastic, temperature, seed, output } => {
            let mut p = Map::new();
            let reference = if reference.starts_with("gallery:") {
                json!(reference)
            } else {
                let bytes = std::fs::read(&reference).map_err(|e| format!("{reference}: {e}"))?;
                serde_json::from_slice::<Value>(&bytes).map_err(|e| format!("{reference}: {e}"))?
            };
            p.insert("reference".into(), reference);
            p.insert("granularity".into(), json!(mode.as_str()));
            p.insert("stochastic".into(), json!(stochastic));
            p.insert("seed".into(), json!(seed));
            if let Some(d) = delta {
                p.insert("delta".into(), json!(d));
            }
            if let Some(t) = temperature {
                p.insert("temperature".into(), json!(t));
            }
            let resp = run_job(&registry, job(Operation::Filter, Some(read_sketch(&input)?), Some(model), p))?;
            if let Some(path) = output {
                write(&path, &artifact(&resp, "filtered.json"))?;
            }
            print(&resp.payload["report"]);
        }
        Command::Attack { input, mode, epsilon, model, label, fast } => {
            let mut p = Map::new();
            p.insert("mode".into(), json!(mode.as_str()));
            p.insert("epsilon".into(), json!(epsilon));
            p.insert("fast".into(), json!(fast));
            if let Some(l) = label {
                p.insert("label".into(), l.parse::<u64>().map(|n| json!(n)).unwrap_or(json!(l)));
            }
            let resp = run_job(&registry, job(Operation::Attack, Some(read_sketch(&input)?), Some(model), p))?;
            print(&resp.payload);
        }
        Command::Reliability { input, model, mode, true_id, kendall } => {
            let mut p = Map::new();
            p.insert("mode".into(), json!(mode.as_str()));
            p.insert("corr".into(), json!(if kendall { "kendall" } else { "spearman" }));
            if let Some(id) = true_id {
                p.insert("true_id".into(), json!(id));
            }
            let resp = run_job(&registry, job(Operation::Reliability, Some(read_sketch(&input)?), Some(model), p))?;
            print(&resp.payload);
        }
        Command::Train { kind, output, n, epochs, seed, gallery } => {
            let mut p = Map::new();
            p.insert("kind".into(), json!(kind));
            p.insert("n".into(), json!(n));
            p.insert("seed".into(), json!(seed));
            if let Some(e) = epochs {
                p.insert("epochs".into(), json!(e));
            }
            if let Some(g) = gallery {
                p.insert("gallery".into(), json!(g));
            }
            let resp = run_job(&registry, job(Operation::Train, None, None, p))?;
            write(&output, &artifact(&resp, "model.bin"))?;
            if resp.artifacts.iter().any(|a| a.name == "gallery.json") {
                write(&output.with_extension("gallery.json"), &artifact(&resp, "gallery.json"))?;
            }
            print(&resp.payload);
        }
        Command::Serve { bind, models_dir, workers, timeout_secs } => {
            let registry = match models_dir {
                Some(dir) => ModelRegistry::load_dir(dir).map_err(|e| e.message)?,
                None => ModelRegistry::from_env().map_err(|e| e.message)?,
            };
            let opts = ServeOptions { workers, timeout: std::time::Duration::from_secs(timeout_secs), ..Default::default() };
            let handle = service::spawn(&bind, registry, opts).map_err(|e| format!("{bind}: {e}"))?;
            eprintln!("listening on http://{}", handle.addr());
            handle.join();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
