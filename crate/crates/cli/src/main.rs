fn main() {
    std::process::exit(tamp_cli::run(std::env::args_os()));
}
