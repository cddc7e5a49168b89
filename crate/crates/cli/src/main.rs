fn main() {
    std::process::exit(msvr_cli::run(std::env::args_os()));
}
