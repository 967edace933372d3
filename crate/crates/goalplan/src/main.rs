fn main() {
    std::process::exit(goalplan::cli::cli_dispatch(std::env::args_os()));
}
