fn main() {
    std::process::exit(bigsurv::cli::run(std::env::args_os()));
}
