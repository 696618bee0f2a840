use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = xsumx::Cli::parse();
    if let Err(e) = xsumx::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(xsumx::exit_code(&e));
    }
}
