fn main() {
    std::process::exit(sarid::cli::main_with_args(std::env::args_os()));
}
