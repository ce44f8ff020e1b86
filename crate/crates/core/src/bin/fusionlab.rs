fn main() {
    std::process::exit(fusionlab::cli::run(std::env::args_os()));
}
