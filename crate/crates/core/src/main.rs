fn main() {
    std::process::exit(call_auction::cli::run(std::env::args_os()));
}
