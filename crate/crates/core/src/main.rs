fn main() {
    std::process::exit(funcause::cli::main_with_args(std::env::args_os()));
}
