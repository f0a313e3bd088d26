fn main() {
    std::process::exit(cgx_cli::run(std::env::args_os()));
}
