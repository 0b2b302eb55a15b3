fn main() {
    std::process::exit(pathforge::cli::main_entry());
}
