fn main() {
    std::process::exit(torusmt_cli::run(std::env::args_os()));
}
