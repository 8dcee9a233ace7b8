fn main() {
    std::process::exit(rsat_core::cli::run());
}
