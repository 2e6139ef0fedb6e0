fn main() {
    std::process::exit(drobust::cli::main());
}
