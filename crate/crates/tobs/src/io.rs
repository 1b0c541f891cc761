//! Persistence and experiment bookkeeping.
//!
//! Binary artifacts (datasets, models) are little-endian IEEE-754 payloads
//! with an 8-byte magic/version tag and a trailing 64-bit checksum; loading
//! verifies the checksum before parsing, so a corrupted file never yields a
//! partial object. Configs, reports and run manifests are JSON. All writes
//! go through a temp-file-plus-rename so readers only ever see complete
//! artifacts. CSV exports carry 17 significant digits, enough to round-trip
//! doubles exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::burgers::{BurgersConfig, SensorLayout};
use crate::dynamics::{OutputSequence, Trajectory};
use crate::error::{Error, Result};
use crate::filter::{Dataset, DatagenConfig, InputNorm, Layer, Mlp, Provenance, Role, TrainConfig};
use crate::observability::{GramianConfig, ObservabilityReport, Survey};
use crate::ukf::UkfConfig;

const DATASET_MAGIC: &[u8; 8] = b"TOBSDS01";
const MODEL_MAGIC: &[u8; 8] = b"TOBSML01";

/// 64-bit payload checksum (leading bytes of SHA-256).
pub fn checksum64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_be_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Write atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Full-precision float formatting for CSV artifacts (17 significant
/// digits; round-trips exactly).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// Little-endian binary primitives
// ---------------------------------------------------------------------------

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: &[u8; 8]) -> Self {
        Self {
            buf: magic.to_vec(),
        }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64_iter<I: IntoIterator<Item = f64>>(&mut self, values: I) {
        for v in values {
            self.f64(v);
        }
    }

    /// Append the checksum of everything written so far and finish.
    fn finish(mut self) -> Vec<u8> {
        let checksum = checksum64(&self.buf);
        self.buf.extend_from_slice(&checksum.to_le_bytes());
        self.buf
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn open(bytes: &'a [u8], magic: &[u8; 8], path: &'a Path) -> Result<Self> {
        let display = path.display().to_string();
        if bytes.len() < 16 {
            return Err(Error::MalformedFile {
                path: display,
                reason: "file too short".into(),
            });
        }
        let (payload, stored) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(stored.try_into().expect("8 bytes"));
        let computed = checksum64(payload);
        if stored != computed {
            return Err(Error::ChecksumMismatch {
                path: display,
                stored,
                computed,
            });
        }
        if &payload[..8] != magic {
            if payload[..6] == magic[..6] {
                return Err(Error::UnsupportedVersion {
                    path: display,
                    found: String::from_utf8_lossy(&payload[..8]).into_owned(),
                });
            }
            return Err(Error::MalformedFile {
                path: display,
                reason: format!(
                    "bad magic {:?}",
                    String::from_utf8_lossy(&payload[..8])
                ),
            });
        }
        Ok(Self {
            bytes: payload,
            offset: 8,
            path,
        })
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.offset + len > self.bytes.len() {
            return Err(Error::MalformedFile {
                path: self.path.display().to_string(),
                reason: "unexpected end of payload".into(),
            });
        }
        let slice = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::MalformedFile {
            path: self.path.display().to_string(),
            reason: format!("value {v} does not fit in usize"),
        })
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64_vec(&mut self, len: usize) -> Result<Vec<f64>> {
        let raw = self.take(len * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn done(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(Error::MalformedFile {
                path: self.path.display().to_string(),
                reason: "trailing bytes after payload".into(),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = Writer::new(DATASET_MAGIC);
    w.u64(data.input_dim() as u64);
    w.u64(data.len() as u64);
    w.u64(data.provenance.master_seed);
    w.f64(data.provenance.noise_sd);
    w.u8(match data.role {
        Role::Training => 0,
        Role::Validation => 1,
    });
    for &seed in &data.provenance.trajectory_seeds {
        w.u64(seed);
    }
    for &start in &data.provenance.window_starts {
        w.u64(start as u64);
    }
    w.f64_iter(data.inputs().iter().copied());
    w.f64_iter(data.labels().iter().copied());
    atomic_write(path, &w.finish())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let mut r = Reader::open(&bytes, DATASET_MAGIC, path)?;
    let p = r.usize()?;
    let count = r.usize()?;
    let master_seed = r.u64()?;
    let noise_sd = r.f64()?;
    let role = match r.u8()? {
        0 => Role::Training,
        1 => Role::Validation,
        other => {
            return Err(Error::MalformedFile {
                path: path.display().to_string(),
                reason: format!("unknown role tag {other}"),
            })
        }
    };
    let mut trajectory_seeds = Vec::with_capacity(count);
    for _ in 0..count {
        trajectory_seeds.push(r.u64()?);
    }
    let mut window_starts = Vec::with_capacity(count);
    for _ in 0..count {
        window_starts.push(r.usize()?);
    }
    let inputs = DMatrix::from_vec(p, count, r.f64_vec(p * count)?);
    let labels = DVector::from_vec(r.f64_vec(count)?);
    r.done()?;
    Dataset::from_parts(
        inputs,
        labels,
        Provenance {
            master_seed,
            noise_sd,
            trajectory_seeds,
            window_starts,
        },
        role,
    )
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

pub fn save_model(path: &Path, net: &Mlp) -> Result<()> {
    let mut w = Writer::new(MODEL_MAGIC);
    w.u8(net.linear_output as u8);
    let dims = net.dims();
    w.u64((dims.len() - 1) as u64);
    for d in &dims {
        w.u64(*d as u64);
    }
    w.f64_iter(net.normalization().mean.iter().copied());
    w.f64_iter(net.normalization().sd.iter().copied());
    for layer in net.layers() {
        w.f64_iter(layer.weights.iter().copied());
        w.f64_iter(layer.bias.iter().copied());
    }
    atomic_write(path, &w.finish())
}

pub fn load_model(path: &Path) -> Result<Mlp> {
    let bytes = fs::read(path)?;
    let mut r = Reader::open(&bytes, MODEL_MAGIC, path)?;
    let linear_output = r.u8()? != 0;
    let n_layers = r.usize()?;
    if n_layers == 0 {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: "model has no layers".into(),
        });
    }
    let mut dims = Vec::with_capacity(n_layers + 1);
    for _ in 0..=n_layers {
        dims.push(r.usize()?);
    }
    let mean = DVector::from_vec(r.f64_vec(dims[0])?);
    let sd = DVector::from_vec(r.f64_vec(dims[0])?);
    let mut layers = Vec::with_capacity(n_layers);
    for k in 0..n_layers {
        let (rows, cols) = (dims[k + 1], dims[k]);
        let weights = DMatrix::from_vec(rows, cols, r.f64_vec(rows * cols)?);
        let bias = DVector::from_vec(r.f64_vec(rows)?);
        layers.push(Layer { weights, bias });
    }
    r.done()?;
    Mlp::from_layers(layers, linear_output, InputNorm { mean, sd })
}

// ---------------------------------------------------------------------------
// CSV: trajectories, output sequences, surveys
// ---------------------------------------------------------------------------

fn csv_bytes(header: &str, rows: impl Iterator<Item = String>) -> Vec<u8> {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out.into_bytes()
}

/// `k,x_1,...,x_n` rows at full precision.
pub fn save_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let n = traj.state_dim();
    let header = std::iter::once("k".to_string())
        .chain((1..=n).map(|i| format!("x_{i}")))
        .collect::<Vec<_>>()
        .join(",");
    let rows = traj.states().iter().enumerate().map(|(k, state)| {
        std::iter::once(k.to_string())
            .chain(state.iter().map(|v| fmt_f64(*v)))
            .collect::<Vec<_>>()
            .join(",")
    });
    atomic_write(path, &csv_bytes(&header, rows))
}

pub fn load_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let mut states = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue; // header
        }
        let mut fields = line.split(',');
        let _k = fields.next();
        let values: std::result::Result<Vec<f64>, _> =
            fields.map(|f| f.trim().parse::<f64>()).collect();
        let values = values.map_err(|e| Error::MalformedFile {
            path: path.display().to_string(),
            reason: format!("line {}: {e}", i + 1),
        })?;
        states.push(DVector::from_vec(values));
    }
    Trajectory::from_states(states)
}

/// `k,y_1,...,y_m` rows at full precision.
pub fn save_outputs_csv(path: &Path, outputs: &OutputSequence) -> Result<()> {
    let m = outputs.output_dim();
    let header = std::iter::once("k".to_string())
        .chain((1..=m).map(|j| format!("y_{j}")))
        .collect::<Vec<_>>()
        .join(",");
    let rows = outputs.outputs().iter().enumerate().map(|(k, y)| {
        std::iter::once(k.to_string())
            .chain(y.iter().map(|v| fmt_f64(*v)))
            .collect::<Vec<_>>()
            .join(",")
    });
    atomic_write(path, &csv_bytes(&header, rows))
}

/// `sample_id,seed,min_eig_G,index` rows.
pub fn save_survey_csv(path: &Path, survey: &Survey) -> Result<()> {
    let rows = survey.samples.iter().map(|s| {
        format!(
            "{},{},{},{}",
            s.sample_id,
            s.seed,
            fmt_f64(s.min_eig),
            fmt_f64(s.index)
        )
    });
    atomic_write(path, &csv_bytes("sample_id,seed,min_eig_G,index", rows))
}

// ---------------------------------------------------------------------------
// JSON reports and manifests
// ---------------------------------------------------------------------------

pub fn save_report_json(path: &Path, report: &ObservabilityReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    atomic_write(path, text.as_bytes())
}

pub fn load_report_json(path: &Path) -> Result<ObservabilityReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// A file referenced by a manifest, with the checksum it was written with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub name: String,
    /// Path relative to the manifest's base directory.
    pub path: String,
    /// Hex form of [`checksum64`] over the file contents.
    pub checksum: String,
}

/// Everything needed to regenerate a run bit-for-bit: config snapshot,
/// seeds, and the artifacts produced (with checksums).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub code_version: String,
    pub created_unix: u64,
    /// The subcommand/pipeline that produced this run.
    pub command: String,
    pub master_seed: u64,
    pub burgers: BurgersConfig,
    pub sensors: SensorLayout,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gramian: Option<GramianConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ukf: Option<UkfConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub datagen: Option<DatagenConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub artifacts: Vec<ArtifactRef>,
    /// Scalar results (RMSEs, indexes, ...) keyed by name.
    #[serde(default)]
    pub results: std::collections::BTreeMap<String, f64>,
}

impl ExperimentManifest {
    pub fn new(
        command: &str,
        master_seed: u64,
        burgers: BurgersConfig,
        sensors: SensorLayout,
    ) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            command: command.to_string(),
            master_seed,
            burgers,
            sensors,
            gramian: None,
            ukf: None,
            datagen: None,
            train: None,
            artifacts: Vec::new(),
            results: Default::default(),
        }
    }

    /// Record a just-written artifact (path relative to the manifest dir).
    pub fn record_artifact(&mut self, name: &str, rel_path: &str, contents: &[u8]) {
        self.artifacts.push(ArtifactRef {
            name: name.to_string(),
            path: rel_path.to_string(),
            checksum: format!("{:016x}", checksum64(contents)),
        });
    }

    /// Record an artifact by re-reading the file it was written to.
    pub fn record_artifact_file(&mut self, name: &str, base: &Path, rel_path: &str) -> Result<()> {
        let contents = fs::read(base.join(rel_path))?;
        self.record_artifact(name, rel_path, &contents);
        Ok(())
    }

    /// Check that every referenced artifact exists and matches its stored
    /// checksum.
    pub fn verify_artifacts(&self, base: &Path) -> Result<()> {
        for artifact in &self.artifacts {
            let full = base.join(&artifact.path);
            let contents = fs::read(&full).map_err(|_| Error::MalformedFile {
                path: full.display().to_string(),
                reason: "artifact referenced by manifest is missing".into(),
            })?;
            let computed = checksum64(&contents);
            let stored = u64::from_str_radix(&artifact.checksum, 16).map_err(|_| {
                Error::MalformedFile {
                    path: full.display().to_string(),
                    reason: format!("bad checksum string {:?}", artifact.checksum),
                }
            })?;
            if computed != stored {
                return Err(Error::ChecksumMismatch {
                    path: full.display().to_string(),
                    stored,
                    computed,
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        atomic_write(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burgers::{make_system, BurgersConfig, SensorLayout};
    use crate::dynamics::{observe_trajectory, propagate};
    use crate::filter::{build_dataset, DatagenConfig, Role, TrainConfig};

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().expect("create temp dir")
    }

    fn small_dataset() -> Dataset {
        let system = make_system(BurgersConfig::default(), SensorLayout::case1()).unwrap();
        build_dataset(&system, &DatagenConfig::default(), 1, 0.028, 7, Role::Training).unwrap()
    }

    #[test]
    fn dataset_round_trips_bit_exactly() {
        let dir = tmpdir();
        let path = dir.path().join("data.bin");
        let data = small_dataset();
        save_dataset(&path, &data).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(data, loaded);
    }

    #[test]
    fn corrupted_byte_fails_checksum_and_loads_nothing() {
        let dir = tmpdir();
        let path = dir.path().join("data.bin");
        save_dataset(&path, &small_dataset()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        match load_dataset(&path) {
            Err(Error::ChecksumMismatch { .. }) => {}
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_version_is_reported() {
        let dir = tmpdir();
        let path = dir.path().join("data.bin");
        save_dataset(&path, &small_dataset()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        // Bump the version tag and fix up the checksum so only the version
        // differs.
        bytes[7] = b'9';
        let len = bytes.len();
        let fixed = checksum64(&bytes[..len - 8]);
        bytes[len - 8..].copy_from_slice(&fixed.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        match load_dataset(&path) {
            Err(Error::UnsupportedVersion { .. }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn model_round_trips_bit_exactly() {
        let dir = tmpdir();
        let path = dir.path().join("model.bin");
        let cfg = TrainConfig {
            hidden_layers: 2,
            hidden_width: 5,
            ..TrainConfig::default()
        };
        let mut net = cfg.build_network(7).unwrap();
        net.set_normalization(
            DVector::from_fn(7, |i, _| i as f64 * 0.1),
            DVector::from_element(7, 0.5),
        )
        .unwrap();
        save_model(&path, &net).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(net, loaded);
    }

    #[test]
    fn trajectory_csv_round_trips_exactly() {
        let dir = tmpdir();
        let path = dir.path().join("traj.csv");
        let config = BurgersConfig::default();
        let system = make_system(config.clone(), SensorLayout::case1()).unwrap();
        let x0 = crate::burgers::sample_fourier_initial(&config, 3, 0.3, 4).unwrap();
        let traj = propagate(&system, &x0, 20).unwrap();
        save_trajectory_csv(&path, &traj).unwrap();
        let loaded = load_trajectory_csv(&path).unwrap();
        assert_eq!(&traj, &loaded);
    }

    #[test]
    fn outputs_csv_has_header_and_rows() {
        let dir = tmpdir();
        let path = dir.path().join("out.csv");
        let config = BurgersConfig::default();
        let system = make_system(config.clone(), SensorLayout::case1()).unwrap();
        let traj = propagate(&system, &DVector::zeros(49), 3).unwrap();
        let outputs = observe_trajectory(&system, &traj, 0.0, 0).unwrap();
        save_outputs_csv(&path, &outputs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("k,y_1,y_2,y_3,y_4"));
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn report_json_round_trips() {
        let dir = tmpdir();
        let path = dir.path().join("report.json");
        let report = ObservabilityReport {
            index: 4.37,
            min_eig_gramian: 1e-10,
            max_eig_gramian: 21.0,
            maximizer: Some(vec![0.25, -0.5]),
            effective_rank: 2,
            cutoff: 1e-12,
            null_leak: 0.0,
            target: 25,
            horizon: 9,
        };
        save_report_json(&path, &report).unwrap();
        let loaded = load_report_json(&path).unwrap();
        assert_eq!(loaded.index, report.index);
        assert_eq!(loaded.maximizer, report.maximizer);
    }

    #[test]
    fn manifest_verifies_artifacts_and_detects_tampering() {
        let dir = tmpdir();
        let base = dir.path();
        let data_rel = "datasets/train.bin";
        let data = small_dataset();
        save_dataset(&base.join(data_rel), &data).unwrap();

        let mut manifest = ExperimentManifest::new(
            "datagen",
            7,
            BurgersConfig::default(),
            SensorLayout::case1(),
        );
        manifest.datagen = Some(DatagenConfig::default());
        manifest.record_artifact_file("training set", base, data_rel).unwrap();
        manifest.results.insert("rmse".into(), 0.0225);
        let manifest_path = base.join("runs/demo/manifest.json");
        manifest.save(&manifest_path).unwrap();

        let loaded = ExperimentManifest::load(&manifest_path).unwrap();
        assert_eq!(loaded, manifest);
        loaded.verify_artifacts(base).unwrap();

        // Tamper with the artifact; verification must fail.
        let mut bytes = fs::read(base.join(data_rel)).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        fs::write(base.join(data_rel), &bytes).unwrap();
        assert!(loaded.verify_artifacts(base).is_err());
    }
}
