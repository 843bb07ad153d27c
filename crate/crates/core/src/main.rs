fn main() {
    omegalab::cli::init_logging();
    std::process::exit(omegalab::cli::main_with_args(std::env::args_os()));
}
