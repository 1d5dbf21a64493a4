use clap::Parser;

use gvdb_server::cli::{run_preprocess, run_serve, Cli, Command};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Preprocess(args) => {
            let report = tokio::task::spawn_blocking(move || run_preprocess(&args)).await??;
            println!("{report}");
        }
        Command::Serve(args) => run_serve(&args).await?,
    }
    Ok(())
}
