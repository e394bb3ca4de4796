fn main() {
    std::process::exit(scenesense::cli::run(std::env::args_os()));
}
