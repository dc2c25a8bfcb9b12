fn main() {
    std::process::exit(higgs_torus::cli::run(std::env::args_os()));
}
