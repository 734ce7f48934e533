use std::io::Write;

fn main() {
    let result = fitcheck_cli::run(std::env::args_os());
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    let _ = stdout.write_all(result.stdout.as_bytes());
    let _ = stderr.write_all(result.stderr.as_bytes());
    let _ = stdout.flush();
    std::process::exit(result.exit_code);
}
