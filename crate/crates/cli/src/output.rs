use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use cellbuck_core::bloch::BucklingResult;
use cellbuck_core::homogenize::EffectiveProperties;
use cellbuck_core::io::{fmt6, write_atomic};
use cellbuck_core::{Error, Result};
use sha2::{Digest, Sha256};

/// Ordered `key = value` lines.
#[derive(Default)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        self.lines.push((key.into(), fmt6(v)));
        self
    }

    pub fn text(&mut self, key: &str, v: impl ToString) -> &mut Self {
        self.lines.push((key.into(), v.to_string()));
        self
    }

    pub fn vec3(&mut self, key: &str, v: [f64; 3]) -> &mut Self {
        let s = v.iter().map(|x| fmt6(*x)).collect::<Vec<_>>().join(", ");
        self.text(key, format!("[{s}]"))
    }

    pub fn properties(&mut self, p: &EffectiveProperties, volume: f64) -> &mut Self {
        self.num("e_bar", p.e_bar)
            .num("kappa_bar", p.kappa_bar)
            .num("zener", p.zener)
            .num("volume_fraction", volume);
        for i in 0..6 {
            for j in 0..6 {
                self.num(&format!("c_bar_{}{}", i + 1, j + 1), p.c_bar[(i, j)]);
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                self.num(&format!("s_bar_{}{}", i + 1, j + 1), p.s_bar[(i, j)]);
            }
        }
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

pub fn csv_error(path: &Path, e: csv::Error) -> Error {
    let io = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    Error::io(path, io)
}

/// Band diagram: arclength, wave vector and load factors per sample.
pub fn write_bands(path: &Path, b: &BucklingResult) -> Result<()> {
    let m = b.taus.iter().map(|t| t.len()).max().unwrap_or(0);
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["path_arclength", "k1", "k2", "k3"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=m).map(|i| format!("lambda_{i}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (s, l) in b.samples.iter().zip(b.lambdas()) {
        let mut row = vec![fmt6(s.arclength), fmt6(s.k.0[0]), fmt6(s.k.0[1]), fmt6(s.k.0[2])];
        row.extend(l.iter().map(|v| fmt6(*v)));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Replay record: what ran, on which inputs, with which settings.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config_text: &str,
    inputs: &[&Path],
    elapsed: Duration,
) -> Result<()> {
    let mut r = Report::default();
    r.text("command", command)
        .text("version", env!("CARGO_PKG_VERSION"))
        .text("config_sha256", sha256_hex(config_text.as_bytes()));
    for (i, p) in inputs.iter().enumerate() {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        r.text(&format!("input_{i}"), p.display())
            .text(&format!("input_{i}_sha256"), sha256_hex(&bytes));
    }
    r.text("elapsed_s", format!("{:.3}", elapsed.as_secs_f64()));
    write_atomic(&dir.join("manifest.txt"), r.render().as_bytes())?;
    write_atomic(&dir.join("config.toml"), config_text.as_bytes())
}
