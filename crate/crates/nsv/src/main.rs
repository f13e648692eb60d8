use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(nsv::cli::run() as u8)
}
