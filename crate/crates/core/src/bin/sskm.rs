fn main() {
    std::process::exit(sskm::cli::main());
}
