fn main() {
    std::process::exit(inbetween_cli::run(std::env::args_os()));
}
