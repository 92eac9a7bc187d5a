fn main() {
    std::process::exit(icad::cli::main_with_args(std::env::args_os()));
}
