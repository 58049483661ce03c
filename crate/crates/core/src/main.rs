fn main() {
    std::process::exit(fairattn::cli::main());
}
