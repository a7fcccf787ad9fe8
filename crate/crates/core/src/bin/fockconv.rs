fn main() {
    std::process::exit(fockconv::cli::main_with_std());
}
