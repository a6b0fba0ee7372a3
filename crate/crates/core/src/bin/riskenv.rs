fn main() {
    std::process::exit(riskenv::cli::main_with_args(std::env::args_os()));
}
