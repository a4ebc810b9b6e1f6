// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

fn main() {
    std::process::exit(amq_cli::dispatch(std::env::args_os()));
}
