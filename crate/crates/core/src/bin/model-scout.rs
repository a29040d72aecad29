fn main() -> std::process::ExitCode {
    model_scout::cli::main()
}
