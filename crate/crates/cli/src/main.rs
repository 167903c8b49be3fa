fn main() {
    std::process::exit(gaitrisk_cli::run(std::env::args_os()));
}
