fn main() {
    std::process::exit(nls_lens::cli::run_command(std::env::args_os()));
}
