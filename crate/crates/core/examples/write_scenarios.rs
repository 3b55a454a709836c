// The three ways writes can be handled while reads stay on immutable replicas:
// a read-only catalog maintained by an administrator, eventual consistency,
// and asynchronous processing with tickets.

use std::error::Error;

use imagebake::demo::run_demo;
use imagebake::gateway::Mode;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for mode in [Mode::ReadOnly, Mode::EventualConsistency, Mode::AsyncProcessing] {
        let transcript = run_demo(mode)?;
        println!("{}", transcript.to_text());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
