fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(docsynth_cli::main_with(std::env::args_os()))
}
