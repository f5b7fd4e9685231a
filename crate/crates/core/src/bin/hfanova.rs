fn main() {
    std::process::exit(hfanova::cli::main_with_args(std::env::args_os()));
}
