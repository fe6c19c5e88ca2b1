fn main() {
    std::process::exit(eigenbio::cli::run());
}
