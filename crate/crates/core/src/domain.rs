//! Workload and VM-offer domain model.
//!
//! A workload request carries five features — CPU demand (FLOP), IO demand
//! (IOP), end-to-end deadline (s), payload size (bytes) and tolerated packet
//! error rate — and a VM offer carries the matching four capacities. All
//! learning and attack mathematics runs in min-max normalized feature space;
//! the normalizer is fitted once on the offline batch and then frozen.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Number of workload features.
pub const DIM: usize = 5;

/// Feature names in canonical order (also used as normalizer indices).
pub const FEATURES: [&str; DIM] = ["cpu_flop", "io_iop", "e2e_s", "size_bytes", "per"];

/// Canonical feature indices.
pub const F_CPU: usize = 0;
pub const F_IO: usize = 1;
pub const F_E2E: usize = 2;
pub const F_SIZE: usize = 3;
pub const F_PER: usize = 4;

// ============================================================================
// Workload and offer records
// ============================================================================

/// One offloaded workload request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    /// Requested computation, FLOP.
    pub cpu_flop: f64,
    /// Requested IO operations, IOP.
    pub io_iop: f64,
    /// Tolerated end-to-end service time, seconds.
    pub e2e_s: f64,
    /// Uplink payload size, bytes.
    pub size_bytes: f64,
    /// Tolerated packet error rate, in (0, 1).
    pub per: f64,
}

impl Workload {
    /// Feature vector in canonical order.
    pub fn features(&self) -> [f64; DIM] {
        [self.cpu_flop, self.io_iop, self.e2e_s, self.size_bytes, self.per]
    }

    /// Build from a feature vector in canonical order.
    pub fn from_features(f: [f64; DIM]) -> Self {
        Workload {
            cpu_flop: f[F_CPU],
            io_iop: f[F_IO],
            e2e_s: f[F_E2E],
            size_bytes: f[F_SIZE],
            per: f[F_PER],
        }
    }

    /// Check the domain invariants: strictly positive demands and deadline,
    /// PER strictly inside (0, 1).
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cpu_flop", self.cpu_flop),
            ("io_iop", self.io_iop),
            ("e2e_s", self.e2e_s),
            ("size_bytes", self.size_bytes),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "workload field {name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.per > 0.0 && self.per < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "workload per must lie in (0, 1), got {}",
                self.per
            )));
        }
        Ok(())
    }
}

/// One VM offer template from the provider catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VmOffer {
    /// Offered compute rate, FLOP/s.
    pub cpu_rate: f64,
    /// Offered IO rate, IOP/s.
    pub io_rate: f64,
    /// Offered uplink capacity, bytes/s.
    pub cap: f64,
    /// Link packet error rate of the offer, in (0, 1).
    pub per: f64,
}

impl VmOffer {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cpu_rate", self.cpu_rate),
            ("io_rate", self.io_rate),
            ("cap", self.cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "offer field {name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.per > 0.0 && self.per < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "offer per must lie in (0, 1), got {}",
                self.per
            )));
        }
        Ok(())
    }
}

// ============================================================================
// Uniform workload generation
// ============================================================================

/// Per-feature closed ranges for the uniform workload generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanges {
    pub cpu_flop: (f64, f64),
    pub io_iop: (f64, f64),
    pub e2e_s: (f64, f64),
    pub size_bytes: (f64, f64),
    pub per: (f64, f64),
}

impl FeatureRanges {
    /// Ranges in canonical feature order.
    pub fn as_array(&self) -> [(f64, f64); DIM] {
        [self.cpu_flop, self.io_iop, self.e2e_s, self.size_bytes, self.per]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, (lo, hi)) in self.as_array().into_iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "range for {} must satisfy min < max with finite bounds, got [{lo}, {hi}]",
                    FEATURES[i]
                )));
            }
            if i == F_PER {
                if !(lo > 0.0 && hi < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "per range must lie strictly inside (0, 1), got [{lo}, {hi}]"
                    )));
                }
            } else if !(lo > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "range for {} must be strictly positive, got min {lo}",
                    FEATURES[i]
                )));
            }
        }
        Ok(())
    }
}

/// Draw `count` workloads with each feature independent and uniform over its
/// range. The same `(count, ranges, seed)` triple always reproduces the same
/// batch bit for bit.
pub fn generate_workloads(count: usize, ranges: &FeatureRanges, seed: u64) -> Result<Vec<Workload>> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = ranges.as_array();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut f = [0.0; DIM];
        for (k, &(lo, hi)) in r.iter().enumerate() {
            f[k] = rng.random_range(lo..=hi);
        }
        out.push(Workload::from_features(f));
    }
    Ok(out)
}

// ============================================================================
// Min-max normalization
// ============================================================================

/// A point in normalized feature space (each coordinate nominally in [0, 1],
/// but values outside the fitted range map outside the unit interval — there
/// is deliberately no clamping).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint(pub [f64; DIM]);

impl NormalizedPoint {
    pub fn dist(&self, other: &NormalizedPoint) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn dist_sq(&self, other: &NormalizedPoint) -> f64 {
        let mut s = 0.0;
        for k in 0..DIM {
            let d = self.0[k] - other.0[k];
            s += d * d;
        }
        s
    }

    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for k in 0..DIM {
            s += self.0[k] * self.0[k];
        }
        s.sqrt()
    }

    pub fn sub(&self, other: &NormalizedPoint) -> NormalizedPoint {
        let mut out = [0.0; DIM];
        for k in 0..DIM {
            out[k] = self.0[k] - other.0[k];
        }
        NormalizedPoint(out)
    }

    pub fn add(&self, other: &NormalizedPoint) -> NormalizedPoint {
        let mut out = [0.0; DIM];
        for k in 0..DIM {
            out[k] = self.0[k] + other.0[k];
        }
        NormalizedPoint(out)
    }

    pub fn scale(&self, a: f64) -> NormalizedPoint {
        let mut out = [0.0; DIM];
        for k in 0..DIM {
            out[k] = self.0[k] * a;
        }
        NormalizedPoint(out)
    }

    pub fn zero() -> NormalizedPoint {
        NormalizedPoint([0.0; DIM])
    }
}

/// Frozen min-max scaler fitted on a reference batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    /// Per-feature minimum over the reference batch, canonical order.
    pub min: [f64; DIM],
    /// Per-feature maximum over the reference batch, canonical order.
    pub max: [f64; DIM],
}

/// Fit a min-max normalizer on a batch. Every feature must have a strictly
/// positive spread, otherwise the corresponding feature is degenerate.
pub fn fit_normalizer(batch: &[Workload]) -> Result<FeatureNormalizer> {
    if batch.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            got: 0,
            context: "fit_normalizer",
        });
    }
    let mut min = [f64::INFINITY; DIM];
    let mut max = [f64::NEG_INFINITY; DIM];
    for w in batch {
        let f = w.features();
        for k in 0..DIM {
            min[k] = min[k].min(f[k]);
            max[k] = max[k].max(f[k]);
        }
    }
    for k in 0..DIM {
        if !(max[k] > min[k]) {
            return Err(Error::DegenerateFeature {
                feature: FEATURES[k],
                value: min[k],
            });
        }
    }
    Ok(FeatureNormalizer { min, max })
}

impl FeatureNormalizer {
    /// Map a workload into normalized space: `(x - min) / (max - min)` per
    /// feature. Strictly monotone per feature; values outside the fitted
    /// range land outside [0, 1] and are not clamped.
    pub fn normalize(&self, w: &Workload) -> NormalizedPoint {
        let f = w.features();
        let mut out = [0.0; DIM];
        for k in 0..DIM {
            out[k] = (f[k] - self.min[k]) / (self.max[k] - self.min[k]);
        }
        NormalizedPoint(out)
    }

    /// Inverse of [`normalize`](Self::normalize).
    pub fn denormalize(&self, p: &NormalizedPoint) -> Workload {
        let mut f = [0.0; DIM];
        for k in 0..DIM {
            f[k] = self.min[k] + p.0[k] * (self.max[k] - self.min[k]);
        }
        Workload::from_features(f)
    }

    /// Normalize a whole batch.
    pub fn normalize_batch(&self, batch: &[Workload]) -> Vec<NormalizedPoint> {
        batch.iter().map(|w| self.normalize(w)).collect()
    }
}

// ============================================================================
// Serialization helpers (CSV and JSON)
// ============================================================================

/// Write workloads as RFC-4180 CSV; the header names the five fields with
/// their units (`cpu_flop,io_iop,e2e_s,size_bytes,per`).
pub fn workloads_to_csv<W: Write>(out: W, batch: &[Workload]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in batch {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn workloads_from_csv<R: Read>(input: R) -> Result<Vec<Workload>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn workloads_to_json_file(path: &Path, batch: &[Workload]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(file, batch)?;
    Ok(())
}

pub fn workloads_from_json_file(path: &Path) -> Result<Vec<Workload>> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(file)?)
}

/// Write VM offers as CSV (`cpu_rate,io_rate,cap,per`; rates are FLOP/s,
/// IOP/s and bytes/s).
pub fn offers_to_csv<W: Write>(out: W, offers: &[VmOffer]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in offers {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn offers_from_csv<R: Read>(input: R) -> Result<Vec<VmOffer>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
