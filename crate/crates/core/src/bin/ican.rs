fn main() {
    std::process::exit(ican_core::cli::main_with_args(std::env::args_os()));
}
