pub mod bench;
pub mod flops;
pub mod mask;
pub mod verify;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ssta_core::{Error, Result};

/// Emit a JSON report to stdout or to `--out`.
pub(crate) fn emit_json<T: serde::Serialize>(report: &T, out: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("reports always serialize");
    match out {
        None => {
            println!("{json}");
            Ok(())
        }
        Some(path) => {
            let io_err = |source| Error::Io {
                path: path.to_path_buf(),
                source,
            };
            let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
            w.write_all(json.as_bytes()).map_err(io_err)?;
            w.write_all(b"\n").map_err(io_err)?;
            w.flush().map_err(io_err)?;
            eprintln!("report written to {}", path.display());
            Ok(())
        }
    }
}
