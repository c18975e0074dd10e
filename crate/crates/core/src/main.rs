fn main() {
    std::process::exit(erppo::cli::run(std::env::args_os()));
}
