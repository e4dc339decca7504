fn main() {
    std::process::exit(saddle_escape::run(std::env::args_os()));
}
