fn main() {
    std::process::exit(vqat_cli::run(std::env::args_os()));
}
