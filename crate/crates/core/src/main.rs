fn main() {
    std::process::exit(vizsim::cli::main_with_args(std::env::args_os()));
}
