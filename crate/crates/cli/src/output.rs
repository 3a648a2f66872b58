//! JSON-lines and CSV writers.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Serialize;

use pstar_core::TestDecision;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

enum Sink {
    Json(Box<dyn Write>),
    Csv(csv::Writer<Box<dyn Write>>),
}

pub struct Out {
    sink: Sink,
}

/// Flat view of a decision for CSV output.
#[derive(Serialize)]
struct DecisionRow<'a> {
    test: &'a str,
    reject: bool,
    statistic: f64,
    threshold: f64,
    threshold_drawn: Option<f64>,
    crossing_time: Option<usize>,
    forced: bool,
}

impl Out {
    fn new(w: Box<dyn Write>, format: Format) -> Self {
        let sink = match format {
            Format::Json => Sink::Json(w),
            Format::Csv => Sink::Csv(csv::Writer::from_writer(w)),
        };
        Self { sink }
    }

    #[cfg(test)]
    fn buffer(format: Format) -> (Self, std::rc::Rc<std::cell::RefCell<Vec<u8>>>) {
        let buf = std::rc::Rc::new(std::cell::RefCell::new(Vec::new()));
        (Self::new(Box::new(Shared(buf.clone())), format), buf)
    }

    pub fn stdout(format: Format) -> Self {
        Self::new(Box::new(BufWriter::new(io::stdout())), format)
    }

    pub fn file(path: &Path, format: Format) -> Result<Self> {
        let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(Self::new(Box::new(BufWriter::new(f)), format))
    }

    pub fn record<T: Serialize>(&mut self, row: &T) -> Result<()> {
        match &mut self.sink {
            Sink::Json(w) => {
                serde_json::to_writer(&mut *w, row)?;
                w.write_all(b"\n")?;
            }
            Sink::Csv(w) => w.serialize(row)?,
        }
        Ok(())
    }

    pub fn decision(&mut self, d: &TestDecision) -> Result<()> {
        match self.sink {
            Sink::Json(_) => self.record(d),
            Sink::Csv(_) => self.record(&DecisionRow {
                test: &d.test,
                reject: d.reject,
                statistic: d.statistic,
                threshold: d.threshold,
                threshold_drawn: d.threshold_drawn,
                crossing_time: d.crossing_time,
                forced: d.forced,
            }),
        }
    }

    pub fn table<T: Serialize>(&mut self, rows: &[T]) -> Result<()> {
        if rows.is_empty() {
            if let Sink::Csv(w) = &mut self.sink {
                w.write_record(["setting", "K_or_n", "delta", "method", "power", "std_err", "reps", "seed"])?;
            }
        }
        for r in rows {
            self.record(r)?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        match self.sink {
            Sink::Json(mut w) => w.flush()?,
            Sink::Csv(mut w) => w.flush()?,
        }
        Ok(())
    }
}

#[cfg(test)]
struct Shared(std::rc::Rc<std::cell::RefCell<Vec<u8>>>);

#[cfg(test)]
impl Write for Shared {
    fn write(&mut self, b: &[u8]) -> io::Result<usize> {
        self.0.borrow_mut().write(b)
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}
