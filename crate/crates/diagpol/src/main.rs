use std::process::ExitCode;

fn main() -> ExitCode {
    diagpol::cli::main(std::env::args_os())
}
