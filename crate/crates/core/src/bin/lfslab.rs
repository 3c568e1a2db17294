fn main() {
    std::process::exit(lfslab::cli::main_with_args(std::env::args()));
}
