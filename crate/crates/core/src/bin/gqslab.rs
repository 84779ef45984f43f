fn main() {
    let code = gqslab::cli::main_with(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code as i32);
}
