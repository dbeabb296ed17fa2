fn main() {
    std::process::exit(pavekit::cli::run(std::env::args_os()));
}
