fn main() {
    std::process::exit(zeroroot::cli::run());
}
