fn main() {
    std::process::exit(txreid::cli::dispatch(std::env::args_os()));
}
