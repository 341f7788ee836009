use std::process::ExitCode;

fn main() -> ExitCode {
    mixerbench_cli::run(std::env::args().collect())
}
