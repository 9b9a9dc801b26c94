use std::process::ExitCode;

fn main() -> ExitCode {
    swr_cli::main_with(std::env::args_os())
}
