//! Cluster-to-VM matching.
//!
//! Each non-empty cluster is summarized by a worst-corner demand point
//! (feature-wise most demanding member). Offers are screened by link packet
//! error rate against the demand tolerance, then the feasible offer with the
//! highest load score `alpha_tilde <= 1` wins — the tightest fit that still
//! meets the deadline, which minimizes over-provisioning. When every
//! PER-feasible offer overshoots (`alpha_tilde > 1`), the least-overloaded
//! one is chosen and flagged at-risk. Instance counts divide the summed
//! member load by the packing factor `lambda`.

use crate::domain::{VmOffer, Workload};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read as IoRead, Write as IoWrite};
use std::path::Path;

/// Compute service time on an offer: CPU work plus I/O work, in seconds.
pub fn service_time(w: &Workload, o: &VmOffer) -> f64 {
    w.cpu_flop / o.cpu_rate + w.io_iop / o.io_rate
}

/// Network transmission time of the workload's data over the offer's link.
pub fn transmission_time(w: &Workload, o: &VmOffer) -> f64 {
    w.size_bytes / o.cap
}

/// Load score: total busy time (service plus transmission) as a fraction of
/// the deadline. A score of 1.0 means the offer finishes exactly at the
/// deadline with no queueing; above 1.0 the offer cannot meet it at all.
pub fn alpha_tilde(w: &Workload, o: &VmOffer) -> f64 {
    (service_time(w, o) + transmission_time(w, o)) / w.e2e_s
}

/// Worst-corner demand point of a cluster: feature-wise maximum of the
/// resource demands and minimum of the tolerances over the members.
pub fn cluster_demand_point(members: &[Workload]) -> Result<Workload> {
    if members.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            got: 0,
            context: "demand point of an empty cluster",
        });
    }
    let mut d = members[0];
    for m in &members[1..] {
        d.cpu_flop = d.cpu_flop.max(m.cpu_flop);
        d.io_iop = d.io_iop.max(m.io_iop);
        d.e2e_s = d.e2e_s.min(m.e2e_s);
        d.size_bytes = d.size_bytes.max(m.size_bytes);
        d.per = d.per.min(m.per);
    }
    Ok(d)
}

/// A catalog of VM offers available to the dispatcher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmCatalog {
    pub offers: Vec<VmOffer>,
}

impl VmCatalog {
    pub fn new(offers: Vec<VmOffer>) -> Result<Self> {
        if offers.is_empty() {
            return Err(Error::InvalidCatalog("catalog is empty".into()));
        }
        for (i, o) in offers.iter().enumerate() {
            o.validate()
                .map_err(|e| Error::InvalidCatalog(format!("offer {i}: {e}")))?;
        }
        Ok(VmCatalog { offers })
    }

    /// Cross product of per-resource tiers, cpu tier varying slowest and PER
    /// tier fastest.
    pub fn cross_product(
        cpu_rates: &[f64],
        io_rates: &[f64],
        caps: &[f64],
        pers: &[f64],
    ) -> Result<Self> {
        let mut offers =
            Vec::with_capacity(cpu_rates.len() * io_rates.len() * caps.len() * pers.len());
        for &cpu_rate in cpu_rates {
            for &io_rate in io_rates {
                for &cap in caps {
                    for &per in pers {
                        offers.push(VmOffer {
                            cpu_rate,
                            io_rate,
                            cap,
                            per,
                        });
                    }
                }
            }
        }
        VmCatalog::new(offers)
    }

    pub fn len(&self) -> usize {
        self.offers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offers.is_empty()
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let cat: VmCatalog = serde_json::from_reader(std::io::BufReader::new(f))?;
        VmCatalog::new(cat.offers)
    }
}

/// Geometric tier ladder: `count` values starting at `start`, each `ratio`
/// times the previous.
pub fn geometric_tiers(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start * ratio.powi(i as i32)).collect()
}

/// Matching decision for one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPlan {
    /// Cluster label this plan covers.
    pub cluster: usize,
    /// Indices of the member workloads in the matched batch.
    pub members: Vec<usize>,
    /// Worst-corner demand point over the members.
    pub demand: Workload,
    /// Chosen catalog offer index, or `None` when no offer meets the PER
    /// tolerance (the cluster is unservable).
    pub offer: Option<usize>,
    /// Load score of the demand point under the chosen offer.
    pub alpha_tilde: Option<f64>,
    /// Headroom `1 / alpha_tilde`: how many times the demand fits the offer.
    pub headroom: Option<f64>,
    /// True when the chosen offer cannot meet the demand deadline
    /// (fallback least-overloaded choice).
    pub at_risk: bool,
    /// Number of VM instances provisioned for this cluster.
    pub instances: usize,
}

/// Full matching decision for a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPlan {
    pub clusters: Vec<ClusterPlan>,
    /// Packing factor the plan was built with.
    pub lambda: f64,
    /// Total instances across clusters.
    pub total_instances: usize,
}

impl MatchPlan {
    /// Plan for a given cluster label, if that cluster had members.
    pub fn plan_for(&self, cluster: usize) -> Option<&ClusterPlan> {
        self.clusters.iter().find(|c| c.cluster == cluster)
    }
}

/// Admissible range of the packing factor.
pub const LAMBDA_MIN: f64 = 1.0;
pub const LAMBDA_MAX: f64 = 3.0;

/// Match every non-empty cluster of a labeled batch to a catalog offer and
/// size its instance pool.
///
/// Offer selection per cluster: among offers whose link PER is at most the
/// demand tolerance, take the one with the largest `alpha_tilde` that is
/// still `<= 1` (ties prefer the higher-PER offer, then the lower index);
/// if none fits, fall back to the smallest `alpha_tilde` and mark the plan
/// at-risk. Instances are `ceil(sum of member alpha_tilde / lambda)`.
pub fn match_offers(
    members: &[Workload],
    labels: &[usize],
    catalog: &VmCatalog,
    lambda: f64,
) -> Result<MatchPlan> {
    if members.len() != labels.len() {
        return Err(Error::InvalidConfig(format!(
            "match_offers: {} members vs {} labels",
            members.len(),
            labels.len()
        )));
    }
    if !lambda.is_finite() || !(LAMBDA_MIN..=LAMBDA_MAX).contains(&lambda) {
        return Err(Error::Domain {
            value: lambda,
            min: LAMBDA_MIN,
            max: LAMBDA_MAX,
        });
    }
    if catalog.is_empty() {
        return Err(Error::InvalidCatalog("catalog is empty".into()));
    }

    let max_label = labels.iter().copied().max().unwrap_or(0);
    let mut plans = Vec::new();
    for cluster in 0..=max_label {
        let member_idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == cluster).collect();
        if member_idx.is_empty() {
            continue;
        }
        let member_loads: Vec<Workload> = member_idx.iter().map(|&i| members[i]).collect();
        let demand = cluster_demand_point(&member_loads)?;

        let mut best_fit: Option<(usize, f64)> = None; // alpha <= 1, maximize alpha
        let mut best_fallback: Option<(usize, f64)> = None; // minimize alpha
        for (oi, offer) in catalog.offers.iter().enumerate() {
            if offer.per > demand.per {
                continue;
            }
            let a = alpha_tilde(&demand, offer);
            if a <= 1.0 {
                let better = match best_fit {
                    None => true,
                    Some((bi, ba)) => {
                        a > ba
                            || (a == ba && offer.per > catalog.offers[bi].per)
                    }
                };
                if better {
                    best_fit = Some((oi, a));
                }
            }
            let fallback_better = match best_fallback {
                None => true,
                Some((_, ba)) => a < ba,
            };
            if fallback_better {
                best_fallback = Some((oi, a));
            }
        }

        let (offer, alpha, at_risk) = match (best_fit, best_fallback) {
            (Some((oi, a)), _) => (Some(oi), Some(a), false),
            (None, Some((oi, a))) => (Some(oi), Some(a), true),
            (None, None) => (None, None, false),
        };
        let instances = match offer {
            Some(oi) => {
                let o = &catalog.offers[oi];
                let load: f64 = member_loads.iter().map(|m| alpha_tilde(m, o)).sum();
                (load / lambda).ceil().max(1.0) as usize
            }
            None => 0,
        };
        plans.push(ClusterPlan {
            cluster,
            members: member_idx,
            demand,
            offer,
            alpha_tilde: alpha,
            headroom: alpha.map(|a| 1.0 / a),
            at_risk,
            instances,
        });
    }
    let total_instances = plans.iter().map(|p| p.instances).sum();
    Ok(MatchPlan {
        clusters: plans,
        lambda,
        total_instances,
    })
}

/// Piecewise-linear map from packet error rate to the required Eb/N0 in dB,
/// interpolated in log10(PER) between calibration knots. PER values outside
/// the knot range clamp to the end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ebn0Table {
    /// log10 of the knot PERs, strictly ascending.
    log_per: Vec<f64>,
    /// Knot Eb/N0 values in dB, strictly descending (a lower error rate
    /// needs a stronger signal).
    ebn0_db: Vec<f64>,
}

impl Ebn0Table {
    /// Build from `(per, ebn0_db)` knots sorted by ascending PER.
    pub fn from_knots(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "ebn0 table needs at least 2 knots, got {}",
                knots.len()
            )));
        }
        for &(per, _) in knots {
            if !(per > 0.0 && per < 1.0) || !per.is_finite() {
                return Err(Error::Domain {
                    value: per,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        let log_per: Vec<f64> = knots.iter().map(|&(p, _)| p.log10()).collect();
        let ebn0_db: Vec<f64> = knots.iter().map(|&(_, e)| e).collect();
        for w in log_per.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidConfig(
                    "ebn0 knot PERs must be strictly ascending".into(),
                ));
            }
        }
        for w in ebn0_db.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::InvalidConfig(
                    "ebn0 values must be strictly descending in PER".into(),
                ));
            }
        }
        Ok(Ebn0Table { log_per, ebn0_db })
    }

    /// Built-in calibration table (8 knots spanning PER 1e-4 to 3e-1).
    pub fn builtin() -> Self {
        Ebn0Table::from_knots(&[
            (1e-4, 11.0),
            (3e-4, 9.8),
            (1e-3, 8.5),
            (3e-3, 7.2),
            (1e-2, 5.8),
            (3e-2, 4.4),
            (1e-1, 3.0),
            (3e-1, 1.8),
        ])
        .expect("builtin knots are valid")
    }

    /// Required Eb/N0 in dB for the given PER.
    pub fn ebn0_db(&self, per: f64) -> Result<f64> {
        if !per.is_finite() || per <= 0.0 || per >= 1.0 {
            return Err(Error::Domain {
                value: per,
                min: 0.0,
                max: 1.0,
            });
        }
        let x = per.log10();
        let n = self.log_per.len();
        if x <= self.log_per[0] {
            return Ok(self.ebn0_db[0]);
        }
        if x >= self.log_per[n - 1] {
            return Ok(self.ebn0_db[n - 1]);
        }
        let hi = self.log_per.partition_point(|&v| v < x).min(n - 1);
        let lo = hi - 1;
        let t = (x - self.log_per[lo]) / (self.log_per[hi] - self.log_per[lo]);
        Ok(self.ebn0_db[lo] + t * (self.ebn0_db[hi] - self.ebn0_db[lo]))
    }

    /// Load from CSV with header `per,ebn0_db`.
    pub fn from_csv_reader<R: IoRead>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            per: f64,
            ebn0_db: f64,
        }
        let mut rdr = csv::Reader::from_reader(r);
        let mut knots = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            knots.push((row.per, row.ebn0_db));
        }
        Ebn0Table::from_knots(&knots)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ebn0Table::from_csv_reader(std::io::BufReader::new(f))
    }

    /// Write the knots as CSV with header `per,ebn0_db`.
    pub fn to_csv_writer<W: IoWrite>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["per", "ebn0_db"])?;
        for (lp, e) in self.log_per.iter().zip(&self.ebn0_db) {
            wtr.write_record([format!("{}", 10f64.powf(*lp)), format!("{e}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Required Eb/N0 in dB for a PER under the given calibration table.
pub fn per_to_ebn0(per: f64, table: &Ebn0Table) -> Result<f64> {
    table.ebn0_db(per)
}
