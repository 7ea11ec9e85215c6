fn main() {
    std::process::exit(tempokey_cli::run(std::env::args_os()));
}
