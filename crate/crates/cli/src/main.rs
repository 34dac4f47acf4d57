use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = mbfusion_cli::Cli::parse();
    if let Err(err) = mbfusion_cli::run(&cli) {
        eprintln!("error: {err:#}");
        std::process::exit(mbfusion_cli::exit_code(&err));
    }
}
