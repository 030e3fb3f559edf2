fn main() {
    std::process::exit(aidetect_cli::run(std::env::args_os()));
}
