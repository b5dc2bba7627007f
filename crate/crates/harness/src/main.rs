fn main() -> std::process::ExitCode {
    tailsim::cli::main(std::env::args_os())
}
