fn main() {
    std::process::exit(probshift_cli::run(std::env::args_os()));
}
