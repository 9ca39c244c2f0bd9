use std::io::{self, Write};

fn main() {
    let stdout = io::stdout();
    let stderr = io::stderr();
    let code = rootsim::cli_main(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    io::stdout().flush().ok();
    std::process::exit(code);
}
