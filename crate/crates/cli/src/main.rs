use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use classbot_cli::{run, Cli, Format};

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("CLASSBOT_LOG"))
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut stdout = io::stdout();
    match run(&cli, &mut input, &mut stdout) {
        Ok(out) => {
            let rendered = out.render(cli.format);
            if !rendered.is_empty() {
                let _ = writeln!(stdout, "{rendered}");
            }
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            match cli.format {
                Format::Text => eprintln!("error: {e}"),
                Format::Structured => eprintln!("{}", serde_json::json!({ "error": { "kind": e.kind, "message": e.message } })),
            }
            ExitCode::FAILURE
        }
    }
}
