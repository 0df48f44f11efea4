//! Save-audio workloads: generation, JSON-lines traces and digests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SimError;

/// File sizes covered by the bundled profiles, in MB.
pub const SIZE_RANGE: (f64, f64) = (4.0, 512.0);
pub const DEFAULT_CAPACITY_MB: f64 = 4096.0;
pub const REFERENCE_SEED: u64 = 7;
pub const REFERENCE_LARGE_FILES: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SizeDist {
    Constant { mb: f64 },
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub count: usize,
    pub size: SizeDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub capacity_mb: f64,
    pub seed: u64,
    pub phases: Vec<Phase>,
}

impl WorkloadSpec {
    /// Small songs, then interviews, then long recordings until a 4 GB store fills.
    pub fn reference() -> Self {
        Self {
            capacity_mb: DEFAULT_CAPACITY_MB,
            seed: REFERENCE_SEED,
            phases: vec![
                Phase {
                    count: 20,
                    size: SizeDist::Constant { mb: 4.0 },
                },
                Phase {
                    count: 20,
                    size: SizeDist::Uniform { lo: 96.0, hi: 160.0 },
                },
                Phase {
                    count: REFERENCE_LARGE_FILES,
                    size: SizeDist::Uniform { lo: 384.0, hi: 512.0 },
                },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaveAudioEvent {
    pub seq: u64,
    pub size_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTrace {
    pub capacity_mb: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub events: Vec<SaveAudioEvent>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    capacity_mb: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

fn in_range(size: f64) -> bool {
    size >= SIZE_RANGE.0 && size <= SIZE_RANGE.1
}

pub fn generate_workload(spec: &WorkloadSpec) -> Result<WorkloadTrace, SimError> {
    if spec.capacity_mb <= 0.0 || !spec.capacity_mb.is_finite() {
        return Err(SimError::Workload(format!("capacity {} must be positive", spec.capacity_mb)));
    }
    for p in &spec.phases {
        let ok = match p.size {
            SizeDist::Constant { mb } => in_range(mb),
            SizeDist::Uniform { lo, hi } => in_range(lo) && in_range(hi) && lo <= hi,
        };
        if !ok {
            return Err(SimError::Workload(format!(
                "phase size {:?} is outside [{}, {}] MB",
                p.size, SIZE_RANGE.0, SIZE_RANGE.1
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut events = Vec::new();
    for p in &spec.phases {
        for _ in 0..p.count {
            let size_mb = match p.size {
                SizeDist::Constant { mb } => mb,
                SizeDist::Uniform { lo, hi } => rng.random_range(lo..=hi),
            };
            events.push(SaveAudioEvent {
                seq: events.len() as u64,
                size_mb,
            });
        }
    }
    Ok(WorkloadTrace {
        capacity_mb: spec.capacity_mb,
        seed: Some(spec.seed),
        events,
    })
}

impl WorkloadTrace {
    pub fn new(capacity_mb: f64, sizes: &[f64]) -> Result<Self, SimError> {
        let trace = Self {
            capacity_mb,
            seed: None,
            events: sizes
                .iter()
                .enumerate()
                .map(|(i, &size_mb)| SaveAudioEvent { seq: i as u64, size_mb })
                .collect(),
        };
        trace.check()?;
        Ok(trace)
    }

    pub fn check(&self) -> Result<(), SimError> {
        if self.capacity_mb <= 0.0 || !self.capacity_mb.is_finite() {
            return Err(SimError::Workload(format!("capacity {} must be positive", self.capacity_mb)));
        }
        let mut prev: Option<u64> = None;
        for e in &self.events {
            if !in_range(e.size_mb) {
                return Err(SimError::SizeOutOfRange {
                    seq: e.seq,
                    size_mb: e.size_mb,
                });
            }
            if prev.is_some_and(|p| e.seq <= p) {
                return Err(SimError::Workload(format!("sequence numbers must increase (at {})", e.seq)));
            }
            prev = Some(e.seq);
        }
        Ok(())
    }

    /// Header line with capacity and seed, then one `{"seq","size_mb"}` per line.
    /// An empty input is an empty trace with the default capacity.
    pub fn from_jsonl(text: &str) -> Result<Self, SimError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, first)) = lines.next() else {
            return Ok(Self {
                capacity_mb: DEFAULT_CAPACITY_MB,
                seed: None,
                events: Vec::new(),
            });
        };
        let header: Header =
            serde_json::from_str(first).map_err(|e| SimError::Workload(format!("line 1: header: {e}")))?;
        let events = lines
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| SimError::Workload(format!("line {}: {e}", n + 1))))
            .collect::<Result<Vec<SaveAudioEvent>, _>>()?;
        let trace = Self {
            capacity_mb: header.capacity_mb,
            seed: header.seed,
            events,
        };
        trace.check()?;
        Ok(trace)
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            capacity_mb: self.capacity_mb,
            seed: self.seed,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the JSON-lines form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}
