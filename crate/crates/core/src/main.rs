fn main() {
    std::process::exit(altsom::cli::run(std::env::args_os()));
}
