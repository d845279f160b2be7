fn main() {
    let code = maxconst::cli::run(std::env::args_os());
    std::process::exit(code);
}
