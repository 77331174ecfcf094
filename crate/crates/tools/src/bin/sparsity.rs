fn main() {
    std::process::exit(sparsity_tools::cli::run());
}
