fn main() {
    std::process::exit(fedtilt::cli::main());
}
