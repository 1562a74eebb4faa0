fn main() {
    std::process::exit(sle_cli::run(std::env::args_os()));
}
