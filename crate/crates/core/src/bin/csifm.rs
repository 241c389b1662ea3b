use clap::Parser;

use csifm::cli::{error_line, run, thread_cap, Cli};

fn main() {
    let cli = Cli::parse();
    if let Some(n) = thread_cap() {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error kind=threads message={:?}", e.to_string());
            std::process::exit(2);
        }
    }
    match run(cli) {
        Ok(lines) => lines.iter().for_each(|l| println!("{l}")),
        Err(e) => {
            eprintln!("{}", error_line(&e));
            std::process::exit(1);
        }
    }
}
