fn main() {
    let code = wbary::cli::run(std::env::args_os());
    std::process::exit(code);
}
