use std::process::ExitCode;

fn main() -> ExitCode {
    liouville_lattice::runner::main_with_args(std::env::args_os())
}
