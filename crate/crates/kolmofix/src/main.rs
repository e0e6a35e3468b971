fn main() {
    std::process::exit(kolmofix::cli_main());
}
