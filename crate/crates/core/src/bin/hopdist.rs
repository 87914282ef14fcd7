fn main() {
    std::process::exit(hopdist::cli::main_with_args(std::env::args_os()));
}
