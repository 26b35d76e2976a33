fn main() {
    std::process::exit(trailscan::cli::run_cli(std::env::args_os()));
}
