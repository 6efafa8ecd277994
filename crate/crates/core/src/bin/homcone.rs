fn main() {
    std::process::exit(homcone::cli::run(std::env::args_os()));
}
