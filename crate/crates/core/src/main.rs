fn main() {
    std::process::exit(qcycle::cli::run(std::env::args_os()));
}
