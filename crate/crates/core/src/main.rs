fn main() {
    std::process::exit(fockstab::cli::run_from_args(std::env::args_os()));
}
