//! Run directories: config snapshot, log file and CSV artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// 17 significant digits, enough to round-trip any f64.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn create(path: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(path).map_err(CliError::io(path))?;
        Ok(Self { path: path.to_owned() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn snapshot(&self, cfg: &RunConfig) -> CliResult<()> {
        self.write_text("config.toml", &cfg.to_toml())
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<()> {
        let p = self.file(name);
        std::fs::write(&p, text).map_err(CliError::io(p))
    }

    pub fn csv(&self, name: &str) -> CliResult<csv::Writer<BufWriter<File>>> {
        let p = self.file(name);
        let f = File::create(&p).map_err(CliError::io(p))?;
        Ok(csv::Writer::from_writer(BufWriter::new(f)))
    }

    pub fn json<T: serde::Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).expect("serialisable");
        self.write_text(name, &text)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

struct Tee {
    file: Mutex<File>,
}

impl Write for &Tee {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        std::io::stderr().write_all(buf)?;
        self.file.lock().expect("log lock").write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.file.lock().expect("log lock").flush()
    }
}

/// Sends log records to stderr and `run.log`; RUST_LOG adjusts the level.
pub fn init_logging(dir: &RunDir) -> CliResult<()> {
    let p = dir.file("run.log");
    let file = File::create(&p).map_err(CliError::io(p))?;
    let tee: &'static Tee = Box::leak(Box::new(Tee { file: Mutex::new(file) }));
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Pipe(Box::new(tee)))
        .try_init();
    Ok(())
}
