fn main() {
    std::process::exit(conelab::cli::main_with(std::env::args().collect()));
}
