fn main() {
    std::process::exit(resilient_lmi::cli::run(std::env::args().collect()));
}
