fn main() {
    std::process::exit(ris_predict::cli::run(std::env::args_os()));
}
