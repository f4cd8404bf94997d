//! Event sinks writing newline-delimited records.

use std::fs::File;
use std::io::{self, ErrorKind, Write};
use std::net::{Shutdown, TcpStream};
use std::path::Path;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::io::records::record_line;
use crate::stream::Event;

const FLUSH_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SinkReport {
    pub events_sent: u64,
    pub bytes: u64,
    pub duration: Duration,
}

pub trait EventSink {
    fn send(&mut self, event: &Event) -> Result<()>;

    /// Flushes and closes the sink.
    fn finish(&mut self) -> Result<SinkReport>;
}

/// Buffered line writer that counts an event as sent only once its whole
/// line has been accepted by the underlying writer.
pub struct LineSink<W: Write> {
    inner: W,
    buf: Vec<u8>,
    /// End offsets in `buf` of the buffered lines.
    line_ends: Vec<usize>,
    sent: u64,
    bytes: u64,
    started: Instant,
}

impl<W: Write> LineSink<W> {
    pub fn new(inner: W) -> Self {
        LineSink {
            inner,
            buf: Vec::with_capacity(FLUSH_BYTES + 512),
            line_ends: Vec::new(),
            sent: 0,
            bytes: 0,
            started: Instant::now(),
        }
    }

    pub fn get_ref(&self) -> &W {
        &self.inner
    }

    fn fail(&self, source: io::Error) -> Error {
        Error::Sink {
            sent: self.sent,
            source,
        }
    }

    fn drain(&mut self) -> Result<()> {
        let mut written = 0usize;
        let mut counted = 0usize;
        while written < self.buf.len() {
            match self.inner.write(&self.buf[written..]) {
                Ok(0) => {
                    return Err(self.fail(io::Error::new(ErrorKind::WriteZero, "peer closed")));
                }
                Ok(n) => {
                    written += n;
                    while counted < self.line_ends.len() && self.line_ends[counted] <= written {
                        counted += 1;
                        self.sent += 1;
                    }
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(self.fail(e)),
            }
        }
        self.bytes += written as u64;
        self.buf.clear();
        self.line_ends.clear();
        Ok(())
    }

    fn report(&self) -> SinkReport {
        SinkReport {
            events_sent: self.sent,
            bytes: self.bytes,
            duration: self.started.elapsed(),
        }
    }
}

impl<W: Write> EventSink for LineSink<W> {
    fn send(&mut self, event: &Event) -> Result<()> {
        self.buf.extend_from_slice(record_line(event).as_bytes());
        self.buf.push(b'\n');
        self.line_ends.push(self.buf.len());
        if self.buf.len() >= FLUSH_BYTES {
            self.drain()?;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<SinkReport> {
        self.drain()?;
        self.inner.flush().map_err(|e| self.fail(e))?;
        Ok(self.report())
    }
}

/// Sink over a TCP connection; the write half is shut down on finish.
pub struct TcpSink(LineSink<TcpStream>);

impl TcpSink {
    pub fn connect(addr: &str) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(|source| Error::Sink { sent: 0, source })?;
        // Latency matters less than throughput, but small tails should not
        // wait for the Nagle timer.
        stream.set_nodelay(true).ok();
        Ok(TcpSink(LineSink::new(stream)))
    }
}

impl EventSink for TcpSink {
    fn send(&mut self, event: &Event) -> Result<()> {
        self.0.send(event)
    }

    fn finish(&mut self) -> Result<SinkReport> {
        let report = self.0.finish()?;
        match self.0.get_ref().shutdown(Shutdown::Write) {
            Ok(()) => Ok(report),
            Err(e) if e.kind() == ErrorKind::NotConnected => Ok(report),
            Err(e) => Err(self.0.fail(e)),
        }
    }
}

/// In-memory sink, mainly for tests.
#[derive(Debug, Default)]
pub struct VecSink {
    pub events: Vec<Event>,
}

impl EventSink for VecSink {
    fn send(&mut self, event: &Event) -> Result<()> {
        self.events.push(event.clone());
        Ok(())
    }

    fn finish(&mut self) -> Result<SinkReport> {
        Ok(SinkReport {
            events_sent: self.events.len() as u64,
            bytes: 0,
            duration: Duration::ZERO,
        })
    }
}

/// Opens `tcp://host:port`, `-` (stdout) or a file path.
pub fn open_sink(target: &str) -> Result<Box<dyn EventSink + Send>> {
    if let Some(addr) = target.strip_prefix("tcp://") {
        return Ok(Box::new(TcpSink::connect(addr)?));
    }
    if target == "-" {
        return Ok(Box::new(LineSink::new(io::stdout())));
    }
    let file = File::create(Path::new(target))?;
    Ok(Box::new(LineSink::new(file)))
}
