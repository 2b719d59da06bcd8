fn main() {
    std::process::exit(escapelab_harness::run(std::env::args_os()));
}
