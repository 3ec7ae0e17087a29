use std::process::ExitCode;

fn main() -> ExitCode {
    rvpatch::cli::run()
}
