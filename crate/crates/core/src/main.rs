fn main() {
    std::process::exit(discourse::cli::run(std::env::args_os()));
}
