fn main() {
    std::process::exit(bucketopt::cli::run(std::env::args_os()));
}
