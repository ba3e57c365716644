fn main() {
    std::process::exit(camprint::cli::run(std::env::args_os()));
}
