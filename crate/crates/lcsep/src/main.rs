fn main() {
    std::process::exit(lcsep::cli::main_with(std::env::args_os()));
}
