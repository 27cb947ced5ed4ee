use std::process::ExitCode;

fn main() -> ExitCode {
    lspcm::cli::run(std::env::args_os())
}
