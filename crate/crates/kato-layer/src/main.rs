fn main() {
    std::process::exit(kato_layer::cli::run(std::env::args_os()));
}
