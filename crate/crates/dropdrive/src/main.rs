fn main() {
    std::process::exit(dropdrive::cli::dispatch(std::env::args_os()));
}
