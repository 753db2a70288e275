fn main() {
    std::process::exit(evade::cli::cli_main(std::env::args_os()));
}
