fn main() {
    std::process::exit(fraclin::harness::cli::main_from_env());
}
