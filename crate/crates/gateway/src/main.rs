use std::process::ExitCode;

fn main() -> ExitCode {
    let code = std::panic::catch_unwind(|| {
        let mut out = std::io::stdout();
        let mut err = std::io::stderr();
        noetic_gateway::cli::dispatch(std::env::args_os(), &mut out, &mut err)
    })
    .unwrap_or(2);
    ExitCode::from(code as u8)
}
