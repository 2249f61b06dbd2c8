fn main() {
    std::process::exit(scapegeom_cli::run_cli(std::env::args_os()));
}
