fn main() {
    std::process::exit(splab_cli::main_with_args(std::env::args_os()));
}
