use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::default().filter_or("REFOLD_LOG", "warn")).init();
    std::process::exit(refold::cli::run(std::env::args_os()));
}
