use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = stnlffm_cli::Cli::parse();
    if let Err(e) = stnlffm_cli::run(cli) {
        eprintln!("stnlffm: {} error: {e}", e.category());
        std::process::exit(e.exit_code());
    }
}
