use std::process::exit;

fn main() {
    exit(dsmc::cli::run_cli());
}
