fn main() {
    std::process::exit(nibm::cli::main_with_args(std::env::args()));
}
