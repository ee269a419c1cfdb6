fn main() {
    std::process::exit(capforge::cli::run(std::env::args_os()));
}
