fn main() {
    std::process::exit(cruc_core::cli::main());
}
