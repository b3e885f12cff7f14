fn main() {
    std::process::exit(droughtcast::cli::main(std::env::args_os()));
}
