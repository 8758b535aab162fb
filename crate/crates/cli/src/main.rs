fn main() {
    std::process::exit(gsbq_cli::main_with(std::env::args_os().skip(1)));
}
