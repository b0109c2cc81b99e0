//! File writers: JSON with 17 significant digits, CSV with '#' headers.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Pretty JSON whose floats use `{:.16e}`.
struct SigFormatter {
    inner: PrettyFormatter<'static>,
}

impl Formatter for SigFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_f(v).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFormatter { inner: PrettyFormatter::new() });
    v.serialize(&mut ser).map_err(|e| CliError::Numeric(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// Output sink shared by all subcommands.
pub struct Writer<'a> {
    pub dir: PathBuf,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub written: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    pub fn new(command: &'a str, config: &'a RunConfig) -> Result<Self, CliError> {
        let dir = config.output.clone();
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Writer { dir, command, config, written: Vec::new() })
    }

    fn put(&mut self, name: &str, text: String) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_file(&path, &text)?;
        self.written.push(path);
        Ok(())
    }

    fn header_lines(&self, tails: &Value, warnings: &[String]) -> Result<String, CliError> {
        let cfg = serde_json::to_string(self.config).map_err(|e| CliError::Numeric(e.to_string()))?;
        let mut s = format!("# bosecond {VERSION} {}\n# seed {}\n# config {cfg}\n", self.command, self.config.seed);
        s.push_str(&format!("# tails {}\n", serde_json::to_string(tails).unwrap()));
        for w in warnings {
            s.push_str(&format!("# warning: {w}\n"));
        }
        Ok(s)
    }

    /// Report wrapped in the common envelope.
    pub fn json<T: Serialize>(&mut self, name: &str, result: &T, tails: Value, warnings: &[String]) -> Result<(), CliError> {
        let doc = json!({
            "artifact": "bosecond",
            "version": VERSION,
            "command": self.command,
            "seed": self.config.seed,
            "config": self.config,
            "tails": tails,
            "warnings": warnings,
            "result": result,
        });
        let text = to_json_string(&doc)?;
        self.put(name, text)
    }

    pub fn csv(
        &mut self,
        name: &str,
        columns: &[&str],
        rows: &[Vec<String>],
        tails: Value,
        warnings: &[String],
    ) -> Result<(), CliError> {
        let mut s = self.header_lines(&tails, warnings)?;
        s.push_str(&columns.join(","));
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        self.put(name, s)
    }

    /// Free text with the '#' header prepended.
    pub fn text(&mut self, name: &str, body: &str, tails: Value) -> Result<(), CliError> {
        let mut s = self.header_lines(&tails, &[])?;
        s.push_str(body);
        self.put(name, s)
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Numeric(format!("cannot write {}: {e}", path.display())))
}
