fn main() {
    std::process::exit(runslab_cli::main_with_args(std::env::args().collect()));
}
