fn main() {
    std::process::exit(fusionkit::cli::run(std::env::args_os()));
}
