//! Consumers of the sink stream.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{Event, EventRef, Timestamp};
use crate::scalar::Scalar;

/// Receives sink events in strictly increasing sync order.
pub trait Sink<T> {
    fn accept(&mut self, event: EventRef<'_, T>) -> Result<()>;

    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Order {
    last: Option<Timestamp>,
}

impl Order {
    fn check(&mut self, sync: Timestamp) -> Result<()> {
        if let Some(last) = self.last {
            if sync <= last {
                return Err(Error::OutOfOrder { sync, last });
            }
        }
        self.last = Some(sync);
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct CollectSink<T> {
    pub events: Vec<Event<T>>,
    order: Order,
}

impl<T: Scalar> CollectSink<T> {
    pub fn new() -> Self {
        CollectSink {
            events: Vec::new(),
            order: Order::default(),
        }
    }
}

impl<T: Scalar> Sink<T> for CollectSink<T> {
    fn accept(&mut self, event: EventRef<'_, T>) -> Result<()> {
        self.order.check(event.sync)?;
        self.events.push(event.to_owned());
        Ok(())
    }
}

/// Writes `sync,duration,payload` rows (`payload0..` for composite payloads).
pub struct CsvSink<W: Write> {
    out: W,
    width: usize,
    header: bool,
    order: Order,
    pub rows: u64,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W, width: usize) -> Self {
        CsvSink {
            out,
            width,
            header: false,
            order: Order::default(),
            rows: 0,
        }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<T: Scalar, W: Write> Sink<T> for CsvSink<W> {
    fn accept(&mut self, event: EventRef<'_, T>) -> Result<()> {
        self.order.check(event.sync)?;
        if !self.header {
            self.header = true;
            write!(self.out, "sync,duration")?;
            if self.width == 1 {
                write!(self.out, ",payload")?;
            } else {
                for i in 0..self.width {
                    write!(self.out, ",payload{i}")?;
                }
            }
            writeln!(self.out)?;
        }
        write!(self.out, "{},{}", event.sync, event.duration)?;
        for v in event.payload {
            write!(self.out, ",{v}")?;
        }
        writeln!(self.out)?;
        self.rows += 1;
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// FNV-1a digest over syncs, durations and payload bits.
#[derive(Debug, Clone, Copy)]
pub struct ChecksumSink {
    pub hash: u64,
    pub count: u64,
    order: Order,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

impl Default for ChecksumSink {
    fn default() -> Self {
        ChecksumSink {
            hash: FNV_OFFSET,
            count: 0,
            order: Order::default(),
        }
    }
}

impl ChecksumSink {
    pub fn new() -> Self {
        Self::default()
    }

    fn mix(&mut self, word: u64) {
        for b in word.to_le_bytes() {
            self.hash ^= b as u64;
            self.hash = self.hash.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn hex(&self) -> String {
        format!("{:016x}", self.hash)
    }
}

impl<T: Scalar> Sink<T> for ChecksumSink {
    fn accept(&mut self, event: EventRef<'_, T>) -> Result<()> {
        self.order.check(event.sync)?;
        self.mix(event.sync as u64);
        self.mix(event.duration as u64);
        for v in event.payload {
            self.mix(v.bits());
        }
        self.count += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(sync: Timestamp, v: f32) -> Event<f32> {
        Event::scalar(sync, 1, v)
    }

    #[test]
    fn sinks_reject_disorder() {
        let mut s = CollectSink::<f32>::new();
        let (a, b) = (ev(5, 1.0), ev(3, 2.0));
        Sink::accept(&mut s, a.as_ref()).unwrap();
        assert!(matches!(
            Sink::accept(&mut s, b.as_ref()),
            Err(Error::OutOfOrder { sync: 3, last: 5 })
        ));
    }

    #[test]
    fn csv_format() {
        let mut s = CsvSink::new(Vec::new(), 1);
        Sink::<f32>::accept(&mut s, ev(0, 1.5).as_ref()).unwrap();
        Sink::<f32>::accept(&mut s, ev(2, -2.0).as_ref()).unwrap();
        assert_eq!(
            String::from_utf8(s.into_inner()).unwrap(),
            "sync,duration,payload\n0,1,1.5\n2,1,-2\n"
        );
    }

    #[test]
    fn checksum_depends_on_order_and_bits() {
        let mut a = ChecksumSink::new();
        let mut b = ChecksumSink::new();
        Sink::<f32>::accept(&mut a, ev(0, 0.0).as_ref()).unwrap();
        Sink::<f32>::accept(&mut b, ev(0, -0.0).as_ref()).unwrap();
        assert_ne!(a.hash, b.hash);
    }
}
