fn main() {
    std::process::exit(hyperdisc::cli::dispatch(std::env::args_os()));
}
