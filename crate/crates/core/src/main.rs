use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(clamped_spectra::cli::main_with_args(std::env::args_os()))
}
