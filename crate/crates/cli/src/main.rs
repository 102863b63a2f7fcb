fn main() {
    std::process::exit(twister_cli::run_from(std::env::args_os()));
}
