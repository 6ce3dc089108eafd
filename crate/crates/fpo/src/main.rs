fn main() {
    if let Err(e) = fpo::cli::run(std::env::args_os()) {
        let msg = format!("{e:#}").replace('\n', " ");
        eprintln!("error: {msg}");
        std::process::exit(1);
    }
}
