fn main() {
    std::process::exit(uem_cli::run(std::env::args_os()));
}
