// Asynchronous write processing through the gateway, with a custom
// notification sink standing in for e-mail.

use std::error::Error;
use std::sync::{Arc, Mutex};

use imagebake::dump::{parse_dump, Value};
use imagebake::fixtures::GEONAMES_DUMP;
use imagebake::gateway::{Caller, Gateway, Mode, Notification, NotificationSink, ReplicaPool, WriteAck};
use imagebake::master::{Master, WriteStatement};
use imagebake::LogicalClock;

struct Outbox(Mutex<Vec<String>>);

impl NotificationSink for Outbox {
    fn notify(&self, n: Notification) {
        let line = format!("to: submitter of #{}: {:?} at t={}", n.ticket.ticket_id, n.ticket.status, n.ts);
        self.0.lock().unwrap().push(line);
    }
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let master = Arc::new(Mutex::new(Master::new(parse_dump(GEONAMES_DUMP)?)));
    let outbox = Arc::new(Outbox(Mutex::new(Vec::new())));
    let clock = LogicalClock::new();
    let gateway = Gateway::new(Mode::AsyncProcessing, Arc::new(ReplicaPool::new()), master, clock.clone())
        .with_sink(outbox.clone());

    let jobs = [
        WriteStatement::insert(
            "features",
            vec![Value::Int(5001), Value::text("Mount Baker"), Value::Real(48.7767), Value::Real(-121.8144)],
        ),
        // Duplicate key: this ticket will fail without blocking the others.
        WriteStatement::insert(
            "features",
            vec![Value::Int(1397), Value::text("duplicate"), Value::Real(0.0), Value::Real(0.0)],
        ),
        WriteStatement::delete("features", 2512i64),
    ];
    let mut tickets = Vec::new();
    for job in &jobs {
        clock.advance_by(1);
        if let WriteAck::Queued(t) = gateway.route_write(job, Caller::User)? {
            println!("submitted #{} at t={}: {:?}", t.ticket_id, t.submitted_at, t.status);
            tickets.push(t.ticket_id);
        }
    }

    clock.advance_by(10);
    println!("processed {}", gateway.drain_queue());
    for id in tickets {
        let t = gateway.poll_ticket(id)?;
        println!("#{id}: {:?} {:?}", t.status, t.result);
    }
    for line in outbox.0.lock().unwrap().iter() {
        println!("{line}");
    }
    print!("{}", gateway.audit().to_jsonl());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
