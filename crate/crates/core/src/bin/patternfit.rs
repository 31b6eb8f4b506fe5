fn main() {
    std::process::exit(patternfit::cli::main_with_args(std::env::args_os()));
}
