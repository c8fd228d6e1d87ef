fn main() {
    std::process::exit(contactum_cli::run(std::env::args_os()));
}
