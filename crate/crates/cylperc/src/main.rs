fn main() {
    std::process::exit(cylperc::harness::cli_main());
}
