use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(fk_thermo_cli::run(std::env::args()))
}
