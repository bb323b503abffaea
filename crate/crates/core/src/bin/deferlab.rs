fn main() {
    std::process::exit(deferlab::cli::run(std::env::args_os()));
}
