fn main() {
    std::process::exit(tilemul::cli::main_with_args(std::env::args_os()));
}
