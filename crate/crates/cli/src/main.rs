fn main() {
    std::process::exit(autoqec_cli::run(std::env::args_os()));
}
