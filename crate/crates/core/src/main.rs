fn main() {
    std::process::exit(drivecap::cli::run(std::env::args()));
}
