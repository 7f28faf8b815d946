use clap::Parser;
use hybrid_cqed_cli::{error_line, execute, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            eprintln!("error kind=config code=2: {}", e.to_string().lines().next().unwrap_or("bad arguments"));
            std::process::exit(2);
        }
        Err(e) => e.exit(),
    };
    if let Err(e) = execute(&cli) {
        eprintln!("{}", error_line(&e));
        std::process::exit(e.exit_code());
    }
}
