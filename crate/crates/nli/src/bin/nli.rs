fn main() {
    std::process::exit(nli::cli::main());
}
