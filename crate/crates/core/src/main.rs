fn main() {
    std::process::exit(adaincv::cli::run_from_args(std::env::args_os()));
}
