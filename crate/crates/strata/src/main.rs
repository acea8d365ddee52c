fn main() {
    std::process::exit(canopy_strata::cli::main_with(std::env::args_os()));
}
