fn main() {
    std::process::exit(mfbm_cli::run(std::env::args_os()));
}
