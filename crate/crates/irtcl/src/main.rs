use std::process::ExitCode;

fn main() -> ExitCode {
    irtcl::cli::main_entry()
}
