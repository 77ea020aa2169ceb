fn main() {
    std::process::exit(boosthd::cli::main());
}
