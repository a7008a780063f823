use clap::Parser;
use linerecon::cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if let Err(f) = run(cli, &mut out) {
        eprintln!("error: {f}");
        std::process::exit(f.error.class().exit_code());
    }
}
