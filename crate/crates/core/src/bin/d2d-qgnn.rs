fn main() {
    std::process::exit(d2d_qgnn::cli::main_with_args(std::env::args_os()));
}
