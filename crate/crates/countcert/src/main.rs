fn main() {
    std::process::exit(countcert::cli::run());
}
