fn main() {
    std::process::exit(wigner_lab::cli::dispatch(std::env::args_os()));
}
