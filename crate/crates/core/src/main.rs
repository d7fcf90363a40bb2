use clap::Parser;
use wavecoh::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command, &mut std::io::stdout().lock()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
