fn main() {
    std::process::exit(warpforge::cli::run_cli(std::env::args()));
}
