use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance record written next to every output file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub input: Option<String>,
    pub input_sha256: Option<String>,
    pub config: serde_json::Value,
    pub tool_version: &'static str,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub outcome: String,
    pub outputs: Vec<String>,
    #[serde(skip)]
    clock: Option<Instant>,
}

impl RunManifest {
    pub fn start(command: &str, input: Option<(&Path, &[u8])>, config: &impl Serialize) -> Self {
        RunManifest {
            command: command.to_string(),
            input: input.map(|(p, _)| p.display().to_string()),
            input_sha256: input.map(|(_, bytes)| hex::encode(Sha256::digest(bytes))),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            tool_version: env!("CARGO_PKG_VERSION"),
            started_unix_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_clock_seconds: 0.0,
            outcome: String::new(),
            outputs: Vec::new(),
            clock: Some(Instant::now()),
        }
    }

    /// `out.manifest.json` for an output file `out`.
    pub fn path_for(out: &Path) -> PathBuf {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    }

    /// Name under which outputs refer to the manifest of `out`.
    pub fn reference(out: &Path) -> String {
        Self::path_for(out)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn finish(mut self, outcome: &str, out: &Path) -> std::io::Result<()> {
        self.outcome = outcome.to_string();
        self.wall_clock_seconds = self.clock.map(|c| c.elapsed().as_secs_f64()).unwrap_or(0.0);
        self.outputs.push(out.display().to_string());
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(Self::path_for(out), text + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_output() {
        let p = RunManifest::path_for(Path::new("runs/cert.json"));
        assert_eq!(p, Path::new("runs/cert.json.manifest.json"));
        assert_eq!(RunManifest::reference(Path::new("runs/cert.json")), "cert.json.manifest.json");
    }

    #[test]
    fn input_is_hashed() {
        let m = RunManifest::start("verify", Some((Path::new("a.json"), b"abc")), &());
        assert_eq!(
            m.input_sha256.as_deref(),
            Some("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
        );
    }
}
