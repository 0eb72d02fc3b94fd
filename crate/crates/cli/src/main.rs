use clap::Parser;

use pats_cli::{run, workers_from_env, Cli};

fn main() {
    let cli = Cli::parse();
    let mut stderr = std::io::stderr();
    match workers_from_env() {
        Ok(Some(n)) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .expect("the global pool is configured once");
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
    let stdout = std::io::stdout();
    let code = run(&cli, &mut stdout.lock(), &mut stderr);
    std::process::exit(code);
}
