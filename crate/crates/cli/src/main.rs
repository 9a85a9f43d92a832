fn main() {
    std::process::exit(deepbelief_cli::run(std::env::args().skip(1)));
}
