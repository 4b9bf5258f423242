use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use kelly_cli::config::UsageError;
use kelly_cli::{run, Cli};

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn configure_threads(threads: Option<usize>) -> anyhow::Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(UsageError("--threads must be at least 1".into()).into());
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads(cli.threads).and_then(|()| {
        let (out, path) = run(&cli)?;
        match &path {
            Some(p) => std::fs::write(p, &out.bytes)?,
            None => std::io::stdout().lock().write_all(&out.bytes)?,
        }
        Ok(out.failed)
    });
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("check failed");
            ExitCode::from(EXIT_FAILED)
        }
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
