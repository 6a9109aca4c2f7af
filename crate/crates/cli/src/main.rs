fn main() {
    std::process::exit(misinfo_cli::run(std::env::args_os()));
}
