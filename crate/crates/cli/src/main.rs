fn main() {
    std::process::exit(protorec_cli::run(std::env::args_os()));
}
