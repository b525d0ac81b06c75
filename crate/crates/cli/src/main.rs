fn main() {
    std::process::exit(mimic_cli::cli_main(std::env::args_os()));
}
