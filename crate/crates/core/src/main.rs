fn main() {
    std::process::exit(flowmap::cli::run(std::env::args().collect()));
}
