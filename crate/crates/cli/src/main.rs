//! `fd`: run the pipeline service, or drive one as a client.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fd_client::Client;
use fd_core::gateway::{connect, LiveConfig, MockConfig, ProviderConfig};
use fd_core::images::{connect_images, ImageProviderConfig};
use fd_core::job::{JobEvent, JobSnapshot, JobState, SubmitJob};
use fd_core::sketch::SketchDocument;
use fd_service::{api, Providers, Service, ServiceConfig};

#[derive(Parser)]
#[command(name = "fd", version, about = "Turn a sketch and a theme into a refined website")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// Run one job end to end with an in-process service.
    Run(RunArgs),
    /// Submit a job to a running service.
    Submit(SubmitArgs),
    /// Print the snapshot of a job on a running service.
    Status(StatusArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderKind {
    Mock,
    Live,
}

#[derive(Args)]
struct ProviderArgs {
    /// Language-model backend.
    #[arg(long, value_enum, default_value = "mock")]
    provider: ProviderKind,
    /// Image backend; defaults to the same kind as --provider.
    #[arg(long, value_enum)]
    images: Option<ProviderKind>,
    /// Directory of recorded responses for the mock provider.
    #[arg(long, env = "FD_MOCK_CORPUS", default_value = "fixtures/corpus")]
    mock_corpus: PathBuf,
    /// Image catalog for the mock image backend.
    #[arg(long, env = "FD_MOCK_CATALOG", default_value = "fixtures/catalog.json")]
    mock_catalog: PathBuf,
    /// Simulated latency per mock completion.
    #[arg(long, default_value_t = 0)]
    mock_latency_ms: u64,
    #[arg(long, default_value_t = fd_service::DEFAULT_WORKERS)]
    workers: usize,
    #[arg(long, default_value_t = fd_service::DEFAULT_QUEUE_CAPACITY)]
    queue_capacity: usize,
}

impl ProviderArgs {
    fn providers(&self) -> Result<Providers, String> {
        let llm_cfg = match self.provider {
            ProviderKind::Mock => ProviderConfig::Mock(MockConfig {
                seed_corpus: self.mock_corpus.clone(),
                latency_ms: self.mock_latency_ms,
            }),
            ProviderKind::Live => ProviderConfig::Live(LiveConfig::from_env().map_err(|e| e.to_string())?),
        };
        let image_cfg = match self.images.unwrap_or(self.provider) {
            ProviderKind::Mock => ImageProviderConfig::Mock {
                catalog: self.mock_catalog.clone(),
            },
            ProviderKind::Live => ImageProviderConfig::from_env(),
        };
        Ok(Providers {
            llm: connect(&llm_cfg).map_err(|e| e.to_string())?,
            images: connect_images(&image_cfg).map_err(|e| e.to_string())?,
        })
    }

    fn service_config(&self, data_dir: &Path) -> ServiceConfig {
        let mut config = ServiceConfig::new(data_dir);
        config.workers = self.workers;
        config.queue_capacity = self.queue_capacity;
        config
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// Port to listen on; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Args)]
struct JobArgs {
    /// Sketch as an SVG file or a JSON sketch document.
    #[arg(long)]
    sketch: PathBuf,
    #[arg(long)]
    theme: String,
    #[arg(long, default_value_t = fd_core::codegen::DEFAULT_ITERATIONS)]
    iterations: u32,
    #[arg(long)]
    allow_empty_sketch: bool,
}

impl JobArgs {
    fn request(&self) -> Result<SubmitJob, String> {
        let text = std::fs::read_to_string(&self.sketch).map_err(|e| format!("{}: {e}", self.sketch.display()))?;
        let is_svg = self.sketch.extension().is_some_and(|e| e.eq_ignore_ascii_case("svg"));
        let (sketch, svg) = if is_svg {
            (None, Some(text))
        } else {
            let doc: SketchDocument =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", self.sketch.display()))?;
            (Some(doc), None)
        };
        Ok(SubmitJob {
            sketch,
            svg,
            theme: self.theme.clone(),
            iterations: Some(self.iterations),
            allow_empty_sketch: self.allow_empty_sketch,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    job: JobArgs,
    /// Directory receiving the job directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Suppress progress lines on stderr.
    #[arg(long, short)]
    quiet: bool,
    #[command(flatten)]
    providers: ProviderArgs,
}

#[derive(Args)]
struct SubmitArgs {
    #[arg(long, env = "FD_SERVER", default_value = "http://127.0.0.1:8080")]
    server: String,
    #[command(flatten)]
    job: JobArgs,
    /// Follow the job until it ends.
    #[arg(long)]
    wait: bool,
}

#[derive(Args)]
struct StatusArgs {
    #[arg(long, env = "FD_SERVER", default_value = "http://127.0.0.1:8080")]
    server: String,
    job_id: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // Progress of `run` and `submit` goes to stderr already; keep logs for the server.
    let default_filter = match cli.command {
        Command::Serve(_) => "warn,fd_service=info,fd=info",
        _ => "warn",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| default_filter.into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::FAILURE;
        }
    };
    let result = runtime.block_on(async {
        match cli.command {
            Command::Serve(args) => serve(args).await,
            Command::Run(args) => run(args).await,
            Command::Submit(args) => submit(args).await,
            Command::Status(args) => status(args).await,
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// 0 for a completed job, 2 for a partial one, 1 otherwise.
fn exit_code(state: &JobState) -> ExitCode {
    match state {
        JobState::Completed => ExitCode::SUCCESS,
        JobState::Partial => ExitCode::from(2),
        _ => ExitCode::FAILURE,
    }
}

async fn serve(args: ServeArgs) -> Result<ExitCode, String> {
    let providers = args.providers.providers()?;
    let service = Service::start(args.providers.service_config(&args.data_dir), providers)
        .await
        .map_err(|e| format!("cannot open {}: {e}", args.data_dir.display()))?;
    let listener = tokio::net::TcpListener::bind((args.bind.as_str(), args.port))
        .await
        .map_err(|e| format!("cannot bind {}:{}: {e}", args.bind, args.port))?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    // Scripts read this line to find the port when started with --port 0.
    println!("listening on http://{addr}");
    tracing::info!(%addr, data_dir = %args.data_dir.display(), "serving");
    tokio::select! {
        r = api::serve(service, listener) => r.map_err(|e| e.to_string())?,
        _ = tokio::signal::ctrl_c() => tracing::info!("shutting down"),
    }
    Ok(ExitCode::SUCCESS)
}

fn progress(event: &JobEvent) {
    match event {
        JobEvent::State { state, detail, .. } => match detail {
            Some(d) => eprintln!("state: {state} ({d})"),
            None => eprintln!("state: {state}"),
        },
        JobEvent::VersionReady { index, content_hash, .. } => eprintln!("version {index}: {content_hash}"),
        JobEvent::Warning { message, .. } => eprintln!("warning: {message}"),
    }
}

fn report(snapshot: &JobSnapshot, job_dir: Option<&Path>) {
    for v in &snapshot.versions {
        match job_dir {
            Some(dir) => println!("{}", dir.join(&v.path).display()),
            None => println!("{}", v.path),
        }
    }
    if let Some(reason) = &snapshot.failure {
        eprintln!("{}: {reason}", snapshot.state);
    }
}

async fn run(args: RunArgs) -> Result<ExitCode, String> {
    let request = args.job.request()?;
    let providers = args.providers.providers()?;
    let service = Service::start(args.providers.service_config(&args.out), providers)
        .await
        .map_err(|e| format!("cannot open {}: {e}", args.out.display()))?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    tokio::spawn(api::serve(service, listener));

    let client = Client::new(format!("http://{addr}")).map_err(|e| e.to_string())?;
    let id = client.submit(&request).await.map_err(|e| e.to_string())?;
    let job_dir = args.out.join(&id);
    if !args.quiet {
        eprintln!("job {id} in {}", job_dir.display());
    }
    let quiet = args.quiet;
    let snapshot = client
        .wait(&id, |e| {
            if !quiet {
                progress(e)
            }
        })
        .await
        .map_err(|e| e.to_string())?;
    report(&snapshot, Some(&job_dir));
    Ok(exit_code(&snapshot.state))
}

async fn submit(args: SubmitArgs) -> Result<ExitCode, String> {
    let client = Client::new(&args.server).map_err(|e| e.to_string())?;
    let id = client.submit(&args.job.request()?).await.map_err(|e| e.to_string())?;
    println!("{id}");
    if !args.wait {
        return Ok(ExitCode::SUCCESS);
    }
    let snapshot = client.wait(&id, progress).await.map_err(|e| e.to_string())?;
    report(&snapshot, None);
    Ok(exit_code(&snapshot.state))
}

async fn status(args: StatusArgs) -> Result<ExitCode, String> {
    let client = Client::new(&args.server).map_err(|e| e.to_string())?;
    let snapshot = client.job(&args.job_id).await.map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&snapshot).map_err(|e| e.to_string())?);
    Ok(ExitCode::SUCCESS)
}
