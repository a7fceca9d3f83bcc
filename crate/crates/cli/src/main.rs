fn main() {
    std::process::exit(recigraph_cli::run(std::env::args_os()));
}
