fn main() {
    std::process::exit(mgmp::cli::run(std::env::args_os()));
}
