fn main() {
    std::process::exit(spectrum_tier::cli::run(std::env::args_os()));
}
