fn main() {
    std::process::exit(bellbeam_cli::main_with_args(std::env::args_os()));
}
