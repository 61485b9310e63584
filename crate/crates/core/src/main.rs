fn main() {
    std::process::exit(critshuffle::cli::main_with_args(std::env::args_os().collect()));
}
