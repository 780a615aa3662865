fn main() {
    std::process::exit(laed::shell::run_cli(std::env::args()));
}
