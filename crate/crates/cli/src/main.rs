fn main() {
    std::process::exit(gdimbalance_cli::dispatch(std::env::args_os()));
}
