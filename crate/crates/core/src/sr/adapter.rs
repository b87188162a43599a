//! Subprocess adapter for external super-resolution models.
//!
//! Protocol: `<executable> [extra args] --in <path> --out <path> --scale <r>`.
//! The adapter must write the upscaled image to `--out` and exit 0; its
//! stderr is captured for diagnostics. The output contract (exactly
//! `r*w x r*h`, 3 channels) is enforced here, so a misbehaving adapter
//! cannot leak malformed patches into the pipeline.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{require_survey_factor, SrError};
use crate::imaging::{load_image, ImageBuffer, ScaleFactor};

pub const DEFAULT_ADAPTER_TIMEOUT_SECS: u64 = 60;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub executable: PathBuf,
    #[serde(default)]
    pub extra_args: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    DEFAULT_ADAPTER_TIMEOUT_SECS
}

impl AdapterConfig {
    pub fn new(executable: PathBuf) -> Self {
        Self {
            executable,
            extra_args: Vec::new(),
            timeout_secs: DEFAULT_ADAPTER_TIMEOUT_SECS,
        }
    }
}

static OUT_SEQ: AtomicU64 = AtomicU64::new(0);

fn scratch_output_path() -> PathBuf {
    let seq = OUT_SEQ.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!(
        "faunalens-adapter-{}-{}.ppm",
        std::process::id(),
        seq
    ))
}

/// Upscale a patch on disk through an external adapter executable.
pub fn external_upscale(
    patch_path: &Path,
    r: ScaleFactor,
    adapter: &AdapterConfig,
) -> Result<ImageBuffer, SrError> {
    let factor = require_survey_factor(r)?;
    let input = load_image(patch_path)?;
    let (want_w, want_h) = (input.width() * factor, input.height() * factor);
    let out_path = scratch_output_path();

    let mut child = Command::new(&adapter.executable)
        .args(&adapter.extra_args)
        .arg("--in")
        .arg(patch_path)
        .arg("--out")
        .arg(&out_path)
        .arg("--scale")
        .arg(factor.to_string())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| SrError::AdapterLaunch {
            executable: adapter.executable.display().to_string(),
            source,
        })?;

    // Drain stderr on a side thread so a chatty adapter cannot block on a
    // full pipe.
    let mut stderr_pipe = child.stderr.take().expect("stderr was piped");
    let stderr_thread = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr_pipe.read_to_string(&mut buf);
        buf
    });

    let deadline = Instant::now() + Duration::from_secs(adapter.timeout_secs);
    let status = loop {
        match child.try_wait()? {
            Some(status) => break status,
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                let _ = stderr_thread.join();
                let _ = std::fs::remove_file(&out_path);
                return Err(SrError::AdapterTimeout(adapter.timeout_secs));
            }
            None => std::thread::sleep(Duration::from_millis(5)),
        }
    };
    let stderr = stderr_thread.join().unwrap_or_default();

    let result = (|| {
        if !status.success() {
            return Err(SrError::AdapterFailed {
                status: status.code().unwrap_or(-1),
                stderr: stderr.trim().to_string(),
            });
        }
        let output = load_image(&out_path).map_err(SrError::AdapterOutputUnreadable)?;
        if output.width() != want_w || output.height() != want_h || output.channels() != 3 {
            return Err(SrError::AdapterOutputDims {
                want_w,
                want_h,
                got_w: output.width(),
                got_h: output.height(),
                got_c: output.channels(),
            });
        }
        Ok(output)
    })();
    let _ = std::fs::remove_file(&out_path);
    result
}
