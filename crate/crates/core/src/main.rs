fn main() {
    std::process::exit(invariant_hj::cli::main());
}
