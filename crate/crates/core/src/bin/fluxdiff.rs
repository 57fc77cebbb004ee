fn main() {
    std::process::exit(fluxdiff::harness::cli::cli_main(std::env::args_os()));
}
