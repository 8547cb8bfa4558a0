fn main() -> std::process::ExitCode {
    solace::cli::main()
}
