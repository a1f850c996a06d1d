fn main() {
    std::process::exit(sfpnet::cli::run(std::env::args_os()));
}
