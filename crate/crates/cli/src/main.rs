fn main() {
    std::process::exit(corrsync_cli::run(std::env::args_os()));
}
