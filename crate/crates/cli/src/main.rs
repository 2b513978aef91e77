// SPDX-License-Identifier: MIT OR Apache-2.0

use clap::Parser;
use goalscope::{run, Cli};

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
