use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("FIP_LOG", "info")).init();
    if let Err(e) = fip_cli::run(fip_cli::Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
