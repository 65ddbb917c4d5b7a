fn main() {
    std::process::exit(basinscope_cli::cli::main_with(std::env::args().collect()));
}
