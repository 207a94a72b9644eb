fn main() {
    std::process::exit(reprobe_cli::run(std::env::args().collect()));
}
