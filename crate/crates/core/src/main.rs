fn main() {
    std::process::exit(dyadreg::cli::run(std::env::args_os()));
}
