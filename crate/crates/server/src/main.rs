fn main() -> std::process::ExitCode {
    coordkit_server::cli::main()
}
