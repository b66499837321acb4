fn main() {
    std::process::exit(toric_balanced::cli::run(std::env::args_os()));
}
