fn main() {
    std::process::exit(flowlut::cli::run(std::env::args_os()));
}
