use clap::Parser;
use tdsrobust_cli::{run, Cli, Format};

fn main() {
    let cli = Cli::parse();
    let report = run(&cli);
    match cli.format {
        Format::Json => println!("{}", report.to_json()),
        Format::Text => print!("{}", report.to_text()),
    }
    std::process::exit(report.exit_code);
}
