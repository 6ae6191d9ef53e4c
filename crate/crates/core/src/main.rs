fn main() {
    std::process::exit(aperture::cli::run(std::env::args_os()));
}
