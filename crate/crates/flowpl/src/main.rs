fn main() {
    std::process::exit(flowpl::cli::main_with_args(std::env::args_os()));
}
