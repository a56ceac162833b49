fn main() {
    std::process::exit(promptpolicy::cli::run(std::env::args_os()));
}
