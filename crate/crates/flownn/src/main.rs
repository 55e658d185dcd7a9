fn main() {
    std::process::exit(flownn::cli::main_with(std::env::args_os()));
}
