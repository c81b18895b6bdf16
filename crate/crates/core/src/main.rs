fn main() -> std::process::ExitCode {
    ntiu::cli::main_from_args()
}
