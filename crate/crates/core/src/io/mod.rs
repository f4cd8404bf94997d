//! File formats, static-log ingestion and event sinks.

pub mod feature_csv;
pub mod records;
pub mod sink;
pub mod static_log;

pub use records::{parse_record, read_stream, record_line, write_stream, StreamRecord};
pub use sink::{open_sink, EventSink, LineSink, SinkReport, TcpSink, VecSink};
pub use static_log::{read_static_log, streamify, StaticLogRow};
