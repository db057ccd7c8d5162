fn main() {
    std::process::exit(g2kit::cli::run(std::env::args_os()));
}
