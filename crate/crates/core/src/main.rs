fn main() {
    std::process::exit(cprt::cli::main_with_args(std::env::args_os()));
}
