fn main() {
    std::process::exit(egmarket::cli::main_with(std::env::args_os()));
}
