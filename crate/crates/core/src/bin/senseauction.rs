fn main() {
    std::process::exit(senseauction::cli::main_with_args(std::env::args_os()));
}
