fn main() {
    std::process::exit(antijam::cli::run());
}
