use std::process::ExitCode;

fn main() -> ExitCode {
    pulseprint::cli::main()
}
