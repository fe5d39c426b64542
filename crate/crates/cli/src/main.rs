fn main() {
    std::process::exit(mfc_cli::main_with(std::env::args_os()));
}
