fn main() {
    std::process::exit(hierex::cli::run(std::env::args_os()));
}
