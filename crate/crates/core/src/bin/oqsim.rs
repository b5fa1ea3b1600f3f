fn main() {
    std::process::exit(oqsim::cli::run(std::env::args_os()));
}
