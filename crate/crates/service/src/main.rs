use std::net::SocketAddr;

use clap::Parser;

use cruise_service::{router, ServiceConfig};

#[derive(Parser, Debug)]
#[command(name = "cruise-service", version, about = "HTTP API for the cruise trajectory optimizer")]
struct Args {
    #[arg(long, env = "CRUISE_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "CRUISE_BIND", default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    /// Per-solve wall-clock cap, seconds.
    #[arg(long, default_value_t = 30.0)]
    time_cap: f64,
    /// Simultaneous solves (defaults to the number of cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Allowed CORS origin (any when omitted).
    #[arg(long, env = "CRUISE_CORS_ORIGIN")]
    cors_origin: Option<String>,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let a = Args::parse();
    let mut cfg = ServiceConfig {
        time_cap_s: a.time_cap,
        cors_origin: a.cors_origin,
        ..ServiceConfig::default()
    };
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    let addr = SocketAddr::new(a.bind, a.port);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {addr}");
    axum::serve(listener, router(cfg))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
