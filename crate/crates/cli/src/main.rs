fn main() {
    std::process::exit(gpdiff_cli::main_with_args(std::env::args_os()));
}
