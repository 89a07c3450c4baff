use std::process::ExitCode;

fn main() -> ExitCode {
    let code = selfapprox_cli::app::run(std::env::args_os(), &mut std::io::stdout().lock());
    ExitCode::from(code as u8)
}
