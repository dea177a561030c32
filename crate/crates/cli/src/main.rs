use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(simseed_cli::run(std::env::args_os()).code())
}
