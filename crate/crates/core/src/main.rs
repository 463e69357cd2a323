fn main() {
    std::process::exit(harmonic::cli::run_command(std::env::args_os()));
}
