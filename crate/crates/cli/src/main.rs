fn main() {
    std::process::exit(corpusqc::main_with_args(std::env::args_os()));
}
