use std::io::stdout;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = sthawkes::cli::run(
        std::env::args_os(),
        &sthawkes::cli::runs_root(),
        &mut stdout(),
    );
    std::process::exit(code);
}
