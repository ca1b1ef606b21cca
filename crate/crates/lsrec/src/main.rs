fn main() {
    std::process::exit(lsrec::cli::run());
}
