//! Writes the synthetic fixture episodes and their provider transcript.
//!
//! cargo run -p vlmforge-cli --example make_fixtures -- <dir>

use std::path::PathBuf;

fn main() {
    let dir: PathBuf = std::env::args_os()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| "fixtures".into());
    match vlmforge::synth::write_fixture_set(&dir) {
        Ok(eps) => println!("wrote {} episodes to {}", eps.len(), dir.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
