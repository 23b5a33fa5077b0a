fn main() {
    let code = occq::cli::run(
        std::env::args_os(),
        Some(&occq_api::serve_hook),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    std::process::exit(code);
}
