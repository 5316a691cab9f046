fn main() {
    std::process::exit(pictoforge::workbench::cli_main(std::env::args_os()));
}
