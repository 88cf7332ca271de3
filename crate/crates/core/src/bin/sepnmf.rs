fn main() {
    std::process::exit(sepnmf::cli::run(std::env::args_os()));
}
