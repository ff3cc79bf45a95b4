use clap::Parser;
use hdgranger_cli::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = hdgranger_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
