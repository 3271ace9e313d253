fn main() {
    std::process::exit(fnl::cli::main(std::env::args_os()));
}
