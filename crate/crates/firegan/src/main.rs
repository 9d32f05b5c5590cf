fn main() {
    std::process::exit(firegan::cli::run(std::env::args_os()));
}
