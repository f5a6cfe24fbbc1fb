fn main() {
    std::process::exit(vocot_cli::main_with_args(std::env::args_os()));
}
