fn main() {
    std::process::exit(hermite_frames::cli::run(std::env::args_os()));
}
