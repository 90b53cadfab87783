fn main() {
    std::process::exit(capex_core::cli::main_with_args(std::env::args_os()));
}
