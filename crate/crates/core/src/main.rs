fn main() {
    let mut out = std::io::stdout();
    if let Err(e) = delayed_swap::cli::run(std::env::args_os(), &mut out) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
