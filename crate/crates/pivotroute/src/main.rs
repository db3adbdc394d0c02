use clap::Parser;

fn main() {
    let cli = pivotroute::cli::Cli::parse();
    if let Err(e) = pivotroute::cli::execute(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
