use clap::Parser;
use mcc_cli::args::{Cli, THREADS_ENV};
use mcc_cli::{exit_code, run, EXIT_ERROR};

#[cfg(feature = "parallel")]
fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("{THREADS_ENV}='{v}' is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads() -> anyhow::Result<()> {
    if std::env::var_os(THREADS_ENV).is_some() {
        eprintln!("warning: {THREADS_ENV} ignored, built without the parallel feature");
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let code = match configure_threads().and_then(|()| run(&cli)) {
        Ok(outcome) => exit_code(&outcome),
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    };
    std::process::exit(code);
}
