use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use vesselgen::PipelineConfig;
use vesselgen_service::{router, App, ModelRegistry, Store, MODEL_DIR_ENV};

/// Serves sessions, prompts and generation jobs over HTTP.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory holding `<branch>.json` hierarchical models.
    #[arg(long, env = MODEL_DIR_ENV)]
    model_dir: PathBuf,
    /// Persist sessions and finished jobs here.
    #[arg(long, env = "VESSELGEN_STORE")]
    store: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    workers: usize,
    /// Pipeline config supplying the guidance settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match serve(args).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

async fn serve(args: Args) -> vesselgen::Result<()> {
    let cfg = PipelineConfig::load(args.config.as_deref())?;
    let models = ModelRegistry::load_dir(&args.model_dir)?;
    let store = args.store.map(Store::open).transpose()?;
    let app = App::new(models, cfg.hierarchical, args.workers, store)?;
    log::info!("models loaded for {:?}", app.branches());
    let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
