//! CSV emission and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};

/// Output directory of one invocation. Every file written through it is
/// listed in `manifest.txt`, which [`Run::finish`] writes last.
pub struct Run {
    command: &'static str,
    dir: PathBuf,
    seed: u64,
    config: Vec<(String, String)>,
    files: Vec<String>,
}

impl Run {
    pub fn new(command: &'static str, dir: &Path, seed: u64, config: Vec<(String, String)>) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            command,
            dir: dir.to_path_buf(),
            seed,
            config,
            files: Vec::new(),
        })
    }

    fn header_line(&self) -> String {
        let mut line = format!("# uaelab {} seed={}", self.command, self.seed);
        for (k, v) in &self.config {
            line.push_str(&format!(" {k}={v}"));
        }
        line
    }

    /// Writes `name` with a `# ...` config line, then the CSV header and rows.
    pub fn csv<R>(&mut self, name: &str, header: &[&str], rows: R) -> Result<()>
    where
        R: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(name);
        let mut file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(file, "{}", self.header_line())?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn finish(self) -> Result<PathBuf> {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut body = format!("subcommand={}\nseed={}\nout={}\n", self.command, self.seed, self.dir.display());
        for (k, v) in &self.config {
            body.push_str(&format!("config.{k}={v}\n"));
        }
        body.push_str(&format!("created_unix={stamp}\nfiles:\n"));
        for f in &self.files {
            body.push_str(&format!("  {f}\n"));
        }
        let path = self.dir.join("manifest.txt");
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// CSV cell text. Floats use the shortest round-trip form, switching to
/// exponent notation for very small or large magnitudes.
pub trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        format!("{self:?}")
    }
}

macro_rules! display_cell {
    ($($t:ty),*) => {$(
        impl Cell for $t {
            fn cell(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_cell!(usize, u64, u32, bool);

impl<T: Cell + ?Sized> Cell for &T {
    fn cell(&self) -> String {
        (**self).cell()
    }
}

pub fn cell<T: Cell>(v: T) -> String {
    v.cell()
}

/// Empty cell for a missing value.
pub fn opt<T: Cell>(v: Option<T>) -> String {
    v.map(|x| x.cell()).unwrap_or_default()
}

/// File-name-safe module label: `CRB*-12` becomes `crbstar-12`.
pub fn slug(label: &str) -> String {
    label
        .replace('*', "star")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c.to_ascii_lowercase() } else { '_' })
        .collect()
}
