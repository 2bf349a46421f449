fn main() {
    std::process::exit(dptsim::cli::main_from(std::env::args_os()));
}
