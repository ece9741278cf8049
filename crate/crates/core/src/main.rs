fn main() {
    std::process::exit(nsae::cli::main_with(std::env::args_os()));
}
