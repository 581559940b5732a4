fn main() {
    std::process::exit(reconeval::cli::run_cli(std::env::args_os()));
}
