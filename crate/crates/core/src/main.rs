use clap::Parser;

fn main() {
    let cli = bdas::cli::Cli::parse();
    match bdas::cli::run(&cli.command) {
        Ok(done) => {
            println!("{}", done.message);
            println!("wrote {} files to {}", done.artifacts.len(), done.out.display());
            std::process::exit(done.exit_code());
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
