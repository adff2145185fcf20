fn main() {
    std::process::exit(nnlift::cli::main_with_args(std::env::args_os()));
}
