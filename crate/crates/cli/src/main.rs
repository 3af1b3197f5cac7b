use clap::Parser;

fn main() {
    let cli = minrisk_cli::Cli::parse();
    let code = minrisk_cli::run(cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
