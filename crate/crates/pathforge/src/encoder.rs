//! Encoder factories: builtin deterministic stubs plus an external-process
//! protocol so real models in any runtime can plug in.
//!
//! Wire protocol (ENC1, little-endian, over the child's stdin/stdout):
//!
//! ```text
//! request:  magic "ENC1" | batch u32 | h u32 | w u32 | c u32 | raw u8 pixels
//! response: magic "ENC1" | batch u32 | dim u32 | f32 values
//! ```
//!
//! The first exchange is a handshake with batch = 0 and no pixels; the
//! response's dim field declares the embedding width. Each frame must be
//! answered within the configured timeout or the encoder is declared dead.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use pathforge_core::features::{stub_stats_64, FeatureMatrix, STUB_STATS_DIM};
use pathforge_core::raster::RasterImage;

use crate::error::{PathforgeError, Result};

pub const ENC1_MAGIC: &[u8; 4] = b"ENC1";
pub const DEFAULT_FRAME_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Patch,
    Slide,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EncoderProvider {
    BuiltinStub,
    ExternalProcess { command: Vec<String>, timeout: Duration },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSpec {
    pub name: String,
    pub kind: EncoderKind,
    /// Known embedding width; external encoders learn theirs at handshake.
    pub dim: Option<usize>,
    pub provider: EncoderProvider,
    /// Required input size; None accepts any (uniform within a batch).
    pub expected_patch_size: Option<u32>,
}

/// Name-keyed registry of encoder factories.
#[derive(Clone, Debug)]
pub struct EncoderRegistry {
    specs: BTreeMap<String, EncoderSpec>,
}

impl Default for EncoderRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl EncoderRegistry {
    /// The always-available entries: the deterministic stub patch encoder
    /// and mean pooling as the slide encoder.
    pub fn builtin() -> EncoderRegistry {
        let mut specs = BTreeMap::new();
        specs.insert(
            "stub-stats-64".to_string(),
            EncoderSpec {
                name: "stub-stats-64".to_string(),
                kind: EncoderKind::Patch,
                dim: Some(STUB_STATS_DIM),
                provider: EncoderProvider::BuiltinStub,
                expected_patch_size: None,
            },
        );
        specs.insert(
            "mean-pool".to_string(),
            EncoderSpec {
                name: "mean-pool".to_string(),
                kind: EncoderKind::Slide,
                dim: None, // inherits the patch encoder's width
                provider: EncoderProvider::BuiltinStub,
                expected_patch_size: None,
            },
        );
        EncoderRegistry { specs }
    }

    pub fn register_external(
        &mut self,
        name: &str,
        command: Vec<String>,
        expected_patch_size: Option<u32>,
        timeout: Duration,
    ) {
        self.specs.insert(
            name.to_string(),
            EncoderSpec {
                name: name.to_string(),
                kind: EncoderKind::Patch,
                dim: None,
                provider: EncoderProvider::ExternalProcess { command, timeout },
                expected_patch_size,
            },
        );
    }

    pub fn names(&self) -> Vec<&str> {
        self.specs.keys().map(|s| s.as_str()).collect()
    }

    pub fn spec(&self, name: &str) -> Result<&EncoderSpec> {
        self.specs.get(name).ok_or_else(|| PathforgeError::UnknownEncoder {
            name: name.to_string(),
            registered: self.names().join(", "),
        })
    }

    /// Instantiate a slide encoder by registry name.
    pub fn slide_encoder(&self, name: &str) -> Result<SlideEncoder> {
        let spec = self.spec(name)?;
        if spec.kind != EncoderKind::Slide {
            return Err(PathforgeError::UnknownEncoder {
                name: format!("{name} (a patch encoder, not a slide encoder)"),
                registered: self.names().join(", "),
            });
        }
        Ok(SlideEncoder::MeanPool)
    }

    /// Instantiate a patch encoder. External processes spawn (and handshake)
    /// here; `extra_env` is injected into the child environment, which is how
    /// a device slot id reaches GPU-backed encoders.
    pub fn patch_encoder(
        &self,
        name: &str,
        extra_env: &[(String, String)],
    ) -> Result<Box<dyn PatchEncoder>> {
        let spec = self.spec(name)?;
        if spec.kind != EncoderKind::Patch {
            return Err(PathforgeError::UnknownEncoder {
                name: format!("{name} (a slide encoder, not a patch encoder)"),
                registered: self.names().join(", "),
            });
        }
        match &spec.provider {
            EncoderProvider::BuiltinStub => Ok(Box::new(StubStatsEncoder)),
            EncoderProvider::ExternalProcess { command, timeout } => Ok(Box::new(
                ExternalEncoder::spawn(&spec.name, command, *timeout, extra_env)?,
            )),
        }
    }
}

pub trait PatchEncoder: Send {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn expected_patch_size(&self) -> Option<u32>;
    /// Encode a batch; row i depends only on patch i.
    fn encode_batch(&mut self, patches: &[RasterImage]) -> Result<FeatureMatrix>;
}

/// Slide-level encoders reduce a store of patch embeddings to one vector.
/// Mean pooling is the only builtin; its output width is the input width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlideEncoder {
    MeanPool,
}

impl SlideEncoder {
    pub fn name(&self) -> &'static str {
        "mean-pool"
    }

    pub fn pool(&self, features: &FeatureMatrix) -> Result<Vec<f32>> {
        match self {
            SlideEncoder::MeanPool => Ok(pathforge_core::features::pool_mean(features)?),
        }
    }
}

fn check_batch(patches: &[RasterImage], expected: Option<u32>) -> Result<(u32, u32)> {
    let first = patches.first().ok_or_else(|| PathforgeError::SizeMismatch {
        expected: "a non-empty batch".to_string(),
        got: "0 patches".to_string(),
    })?;
    let (w, h) = (first.width, first.height);
    if let Some(e) = expected {
        if w != e || h != e {
            return Err(PathforgeError::SizeMismatch {
                expected: format!("{e}x{e}"),
                got: format!("{w}x{h}"),
            });
        }
    }
    for p in patches {
        if p.width != w || p.height != h {
            return Err(PathforgeError::SizeMismatch {
                expected: format!("{w}x{h} (uniform batch)"),
                got: format!("{}x{}", p.width, p.height),
            });
        }
    }
    Ok((w, h))
}

/// The deterministic 64-feature statistics encoder.
pub struct StubStatsEncoder;

impl PatchEncoder for StubStatsEncoder {
    fn name(&self) -> &str {
        "stub-stats-64"
    }

    fn dim(&self) -> usize {
        STUB_STATS_DIM
    }

    fn expected_patch_size(&self) -> Option<u32> {
        None
    }

    fn encode_batch(&mut self, patches: &[RasterImage]) -> Result<FeatureMatrix> {
        check_batch(patches, None)?;
        let mut out = FeatureMatrix::new(STUB_STATS_DIM);
        for patch in patches {
            out.push_row(&stub_stats_64(patch));
        }
        Ok(out)
    }
}

/// A child process speaking the ENC1 frame protocol.
pub struct ExternalEncoder {
    name: String,
    dim: usize,
    expected_patch_size: Option<u32>,
    child: Child,
    stdin: std::process::ChildStdin,
    frames: mpsc::Receiver<std::io::Result<(u32, u32, Vec<f32>)>>,
    timeout: Duration,
}

impl ExternalEncoder {
    pub fn spawn(
        name: &str,
        command: &[String],
        timeout: Duration,
        extra_env: &[(String, String)],
    ) -> Result<ExternalEncoder> {
        if command.is_empty() {
            return Err(PathforgeError::ExternalEncoderFailure(
                "empty external encoder command".to_string(),
            ));
        }
        let mut cmd = Command::new(&command[0]);
        cmd.args(&command[1..]).stdin(Stdio::piped()).stdout(Stdio::piped());
        for (k, v) in extra_env {
            cmd.env(k, v);
        }
        let mut child = cmd.spawn().map_err(|e| {
            PathforgeError::ExternalEncoderFailure(format!("spawn {:?}: {e}", command[0]))
        })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        // a reader thread turns the blocking pipe into timeout-capable frames
        let (tx, frames) = mpsc::channel();
        std::thread::spawn(move || loop {
            match read_response_frame(&mut stdout) {
                Ok(frame) => {
                    if tx.send(Ok(frame)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        });
        let mut encoder = ExternalEncoder {
            name: name.to_string(),
            dim: 0,
            expected_patch_size: None,
            child,
            stdin,
            frames,
            timeout,
        };
        // handshake: empty request, the response declares the dimension
        encoder.write_request(0, 0, 0, 0, &[])?;
        let (batch, dim, _) = encoder.next_frame()?;
        if batch != 0 || dim == 0 {
            return Err(PathforgeError::ExternalEncoderFailure(format!(
                "bad handshake: batch={batch} dim={dim}"
            )));
        }
        encoder.dim = dim as usize;
        Ok(encoder)
    }

    pub fn set_expected_patch_size(&mut self, size: Option<u32>) {
        self.expected_patch_size = size;
    }

    fn write_request(&mut self, batch: u32, h: u32, w: u32, c: u32, pixels: &[u8]) -> Result<()> {
        let mut frame = Vec::with_capacity(20 + pixels.len());
        frame.extend_from_slice(ENC1_MAGIC);
        frame.extend_from_slice(&batch.to_le_bytes());
        frame.extend_from_slice(&h.to_le_bytes());
        frame.extend_from_slice(&w.to_le_bytes());
        frame.extend_from_slice(&c.to_le_bytes());
        frame.extend_from_slice(pixels);
        self.stdin
            .write_all(&frame)
            .and_then(|_| self.stdin.flush())
            .map_err(|e| PathforgeError::ExternalEncoderFailure(format!("write: {e}")))
    }

    fn next_frame(&mut self) -> Result<(u32, u32, Vec<f32>)> {
        match self.frames.recv_timeout(self.timeout) {
            Ok(Ok(frame)) => Ok(frame),
            Ok(Err(e)) => {
                Err(PathforgeError::ExternalEncoderFailure(format!("protocol read: {e}")))
            }
            Err(mpsc::RecvTimeoutError::Timeout) => Err(PathforgeError::ExternalEncoderFailure(
                format!("no response within {:?}", self.timeout),
            )),
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(
                PathforgeError::ExternalEncoderFailure("encoder process died".to_string()),
            ),
        }
    }
}

impl Drop for ExternalEncoder {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl PatchEncoder for ExternalEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn expected_patch_size(&self) -> Option<u32> {
        self.expected_patch_size
    }

    fn encode_batch(&mut self, patches: &[RasterImage]) -> Result<FeatureMatrix> {
        let (w, h) = check_batch(patches, self.expected_patch_size)?;
        let mut pixels = Vec::with_capacity(patches.len() * (w * h * 3) as usize);
        for p in patches {
            pixels.extend_from_slice(&p.data);
        }
        self.write_request(patches.len() as u32, h, w, 3, &pixels)?;
        let (batch, dim, values) = self.next_frame()?;
        if batch as usize != patches.len() || dim as usize != self.dim {
            return Err(PathforgeError::ExternalEncoderFailure(format!(
                "response shape {batch}x{dim}, expected {}x{}",
                patches.len(),
                self.dim
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(PathforgeError::ExternalEncoderFailure(
                "non-finite values in response".to_string(),
            ));
        }
        Ok(FeatureMatrix { dim: self.dim, data: values })
    }
}

fn read_exact_or_eof(reader: &mut impl Read, buf: &mut [u8]) -> std::io::Result<()> {
    reader.read_exact(buf)
}

fn read_response_frame(reader: &mut impl Read) -> std::io::Result<(u32, u32, Vec<f32>)> {
    let mut head = [0u8; 12];
    read_exact_or_eof(reader, &mut head)?;
    if &head[..4] != ENC1_MAGIC {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "bad response magic",
        ));
    }
    let batch = u32::from_le_bytes(head[4..8].try_into().unwrap());
    let dim = u32::from_le_bytes(head[8..12].try_into().unwrap());
    let count = batch as usize * dim as usize;
    let mut payload = vec![0u8; count * 4];
    read_exact_or_eof(reader, &mut payload)?;
    let values =
        payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((batch, dim, values))
}

/// Serve the ENC1 protocol over arbitrary streams, answering every request
/// with `encode` (the handshake is answered automatically). Runs until the
/// input closes. This is both the reference implementation for external
/// encoder authors and the engine of `pathforge-stub-encoder`.
pub fn serve_enc1<R: Read, W: Write>(
    input: &mut R,
    output: &mut W,
    dim: u32,
    mut encode: impl FnMut(u32, u32, u32, &[u8]) -> Vec<f32>,
) -> std::io::Result<()> {
    loop {
        let mut head = [0u8; 20];
        match input.read_exact(&mut head) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e),
        }
        if &head[..4] != ENC1_MAGIC {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "bad request magic",
            ));
        }
        let batch = u32::from_le_bytes(head[4..8].try_into().unwrap());
        let h = u32::from_le_bytes(head[8..12].try_into().unwrap());
        let w = u32::from_le_bytes(head[12..16].try_into().unwrap());
        let c = u32::from_le_bytes(head[16..20].try_into().unwrap());
        let mut pixels = vec![0u8; batch as usize * h as usize * w as usize * c as usize];
        input.read_exact(&mut pixels)?;
        let values = if batch == 0 { Vec::new() } else { encode(batch, h, w, &pixels) };
        assert_eq!(values.len(), batch as usize * dim as usize, "encoder width mismatch");
        output.write_all(ENC1_MAGIC)?;
        output.write_all(&batch.to_le_bytes())?;
        output.write_all(&dim.to_le_bytes())?;
        for v in &values {
            output.write_all(&v.to_le_bytes())?;
        }
        output.flush()?;
    }
}
