fn main() {
    if let Err(e) = twistprop_cli::init_threads() {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
    std::process::exit(twistprop_cli::run(std::env::args_os()));
}
