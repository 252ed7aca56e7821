fn main() {
    std::process::exit(hikm_cli::run(std::env::args_os()));
}
