fn main() {
    std::process::exit(filtra_cli::run(std::env::args_os()));
}
