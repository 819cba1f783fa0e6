fn main() {
    std::process::exit(phekf::harness::cli::run_cli(std::env::args_os()));
}
