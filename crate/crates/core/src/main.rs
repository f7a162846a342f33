fn main() {
    std::process::exit(qoct::cli::run(std::env::args_os()));
}
