fn main() {
    gcpv::cli::init_logging();
    std::process::exit(gcpv::cli::run(std::env::args_os()));
}
