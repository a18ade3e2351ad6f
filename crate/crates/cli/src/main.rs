use clap::Parser;

fn main() {
    let cli = guide_cli::Cli::parse();
    if let Err(e) = guide_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
