//! Packet-level event traces: the sole interface between the simulator
//! and the detection pipeline.
//!
//! Trace files are newline-delimited, tab-separated records with a header
//! line; timestamps are decimal seconds with microsecond precision.
//!
//! Conventions:
//! * data packets use the dedicated kinds `send` / `receive` / `overhear`;
//! * control packets (`rts`, `cts`, `ack`, `rreq`, `rrep`, `rerr`) encode
//!   the role of the observer through the address fields: a row with
//!   `observer == src` logs a transmission, `observer == dst_mac` a
//!   reception, anything else an overheard transmission;
//! * `dst_mac == BROADCAST` marks flooded route requests;
//! * wormhole tunnel transfers log only the reception side and never
//!   produce `overhear` rows.

use std::fmt;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use super::{NodeId, SimError};

/// Broadcast MAC address.
pub const BROADCAST: NodeId = NodeId::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Send,
    Receive,
    Overhear,
    Rts,
    Cts,
    Ack,
    Backoff,
    Rreq,
    Rrep,
    Rerr,
    DropInternal,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Send => "send",
            EventKind::Receive => "receive",
            EventKind::Overhear => "overhear",
            EventKind::Rts => "rts",
            EventKind::Cts => "cts",
            EventKind::Ack => "ack",
            EventKind::Backoff => "backoff",
            EventKind::Rreq => "rreq",
            EventKind::Rrep => "rrep",
            EventKind::Rerr => "rerr",
            EventKind::DropInternal => "drop_internal",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        Some(match s {
            "send" => EventKind::Send,
            "receive" => EventKind::Receive,
            "overhear" => EventKind::Overhear,
            "rts" => EventKind::Rts,
            "cts" => EventKind::Cts,
            "ack" => EventKind::Ack,
            "backoff" => EventKind::Backoff,
            "rreq" => EventKind::Rreq,
            "rrep" => EventKind::Rrep,
            "rerr" => EventKind::Rerr,
            "drop_internal" => EventKind::DropInternal,
            _ => return None,
        })
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    /// Microseconds since simulation start.
    pub time_us: u64,
    /// Node that logged the event.
    pub observer: NodeId,
    pub kind: EventKind,
    pub packet_id: u64,
    pub connection_id: u32,
    /// Transmitting node.
    pub src: NodeId,
    /// MAC-layer destination; `BROADCAST` for flooded packets.
    pub dst_mac: NodeId,
    /// Data packets: per-connection sequence number assigned at the
    /// source. Route control: the discovery identifier.
    pub seq_number: u32,
    pub size: u32,
}

impl TraceEvent {
    pub fn time_seconds(&self) -> f64 {
        self.time_us as f64 / 1e6
    }
}

pub const TRACE_HEADER: &str =
    "timestamp\tobserver\tevent\tpacket_id\tconnection_id\tsrc\tdst_mac\tseq_number\tsize";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventTrace {
    pub events: Vec<TraceEvent>,
}

impl EventTrace {
    pub fn new(events: Vec<TraceEvent>) -> Self {
        EventTrace { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks that timestamps never decrease.
    pub fn is_time_ordered(&self) -> bool {
        self.events.windows(2).all(|w| w[0].time_us <= w[1].time_us)
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "{TRACE_HEADER}")?;
        for e in &self.events {
            writeln!(
                w,
                "{}.{:06}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.time_us / 1_000_000,
                e.time_us % 1_000_000,
                e.observer,
                e.kind,
                e.packet_id,
                e.connection_id,
                e.src,
                e.dst_mac,
                e.seq_number,
                e.size
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<(), SimError> {
        let file = std::fs::File::create(path)?;
        self.write_to(file)
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<EventTrace, SimError> {
        let mut events = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                if line != TRACE_HEADER {
                    return Err(SimError::TraceParse {
                        line: 1,
                        message: format!("unexpected header: {line}"),
                    });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            events.push(parse_line(&line, lineno + 1)?);
        }
        Ok(EventTrace { events })
    }

    pub fn read_file(path: &Path) -> Result<EventTrace, SimError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn parse_line(line: &str, lineno: usize) -> Result<TraceEvent, SimError> {
    let err = |message: String| SimError::TraceParse {
        line: lineno,
        message,
    };
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 9 {
        return Err(err(format!("expected 9 fields, got {}", fields.len())));
    }
    let (sec, usec) = fields[0]
        .split_once('.')
        .ok_or_else(|| err(format!("bad timestamp {}", fields[0])))?;
    if usec.len() != 6 {
        return Err(err(format!("timestamp needs 6 fractional digits: {}", fields[0])));
    }
    let time_us = sec
        .parse::<u64>()
        .map_err(|_| err(format!("bad seconds {sec}")))?
        * 1_000_000
        + usec
            .parse::<u64>()
            .map_err(|_| err(format!("bad microseconds {usec}")))?;
    let kind = EventKind::parse(fields[2]).ok_or_else(|| err(format!("bad event {}", fields[2])))?;
    let p = |i: usize, what: &str| -> Result<u64, SimError> {
        fields[i]
            .parse::<u64>()
            .map_err(|_| err(format!("bad {what} {}", fields[i])))
    };
    Ok(TraceEvent {
        time_us,
        observer: p(1, "observer")? as NodeId,
        kind,
        packet_id: p(3, "packet_id")?,
        connection_id: p(4, "connection_id")? as u32,
        src: p(5, "src")? as NodeId,
        dst_mac: p(6, "dst_mac")? as NodeId,
        seq_number: p(7, "seq_number")? as u32,
        size: p(8, "size")? as u32,
    })
}
