fn main() {
    std::process::exit(netsync::cli::run());
}
