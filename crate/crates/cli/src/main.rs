use clap::Parser;
use umax_cli::{output::to_json, run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(path) => println!("{}", path.display()),
        Err(e) => {
            print!("{}", to_json(&e.to_json()).unwrap_or_else(|_| e.to_string()));
            std::process::exit(e.exit_code());
        }
    }
}
