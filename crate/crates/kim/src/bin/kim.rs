use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match kim::cli::run_cli(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("kim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
