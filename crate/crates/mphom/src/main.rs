use std::process::ExitCode;

use clap::Parser;
use mphom::cli::{run, thread_count, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    // dense kernels stay sequential so repeated runs are bitwise identical
    faer::set_global_parallelism(faer::Par::Seq);
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(&cli.command))
        .build_global()
    {
        log::warn!("thread pool already initialised: {e}");
    }
    let mut stdout = std::io::stdout().lock();
    match run(&cli, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
