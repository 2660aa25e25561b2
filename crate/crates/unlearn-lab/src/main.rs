fn main() {
    std::process::exit(unlearn_lab::cli::run());
}
