fn main() {
    std::process::exit(mitnb::cli::run(std::env::args_os()));
}
