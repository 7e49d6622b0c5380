use std::process::ExitCode;

fn main() -> ExitCode {
    qpowerflow::cli::main_with_args(std::env::args_os())
}
