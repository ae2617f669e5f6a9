fn main() {
    std::process::exit(lattice_sar::cli::run(std::env::args_os()));
}
