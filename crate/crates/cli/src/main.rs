fn main() {
    std::process::exit(basisop_cli::main_with(std::env::args_os()));
}
