fn main() {
    std::process::exit(qsec::cli::main_with_args(std::env::args_os()));
}
