fn main() {
    std::process::exit(tailr::cli::run());
}
