fn main() {
    std::process::exit(trajmask_cli::run(std::env::args_os()));
}
