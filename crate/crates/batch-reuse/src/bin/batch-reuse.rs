fn main() {
    std::process::exit(batch_reuse::cli::run(std::env::args_os()));
}
