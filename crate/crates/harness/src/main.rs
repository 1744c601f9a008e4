fn main() {
    std::process::exit(observerkit::cli::run(std::env::args_os()));
}
