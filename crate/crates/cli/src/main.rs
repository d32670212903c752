//! Command-line front end for the trapped-ion chain engine.

mod io;
mod opts;
mod run;

use clap::Parser;

fn main() {
    let cli = opts::Cli::parse();
    if let Some(threads) = cli.threads {
        // ignore failure: the global pool may already be initialized
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    if let Err(err) = run::dispatch(&cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
