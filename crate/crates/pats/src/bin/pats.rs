fn main() {
    std::process::exit(pats::cli::main_with(std::env::args_os()));
}
