fn main() {
    std::process::exit(qhdef::cli::run(std::env::args_os()));
}
