fn main() {
    std::process::exit(sphflow_cli::run(std::env::args_os()));
}
