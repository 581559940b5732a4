//! Pairing camera frames with joint states recorded on an independent clock.
//!
//! Both streams carry nanosecond timestamps on a common host clock. Each
//! frame receives joint angles interpolated per joint between the two
//! bracketing joint samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::JointAngles;

/// 50 ms: five missed samples at a 100 Hz joint rate.
pub const DEFAULT_MAX_GAP_NS: i64 = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("joint log is empty")]
    EmptyLog,
    #[error("timestamp {t_ns} ns outside joint log span [{first_ns}, {last_ns}]")]
    OutOfRange { t_ns: i64, first_ns: i64, last_ns: i64 },
    #[error("bracketing joint samples are {gap_ns} ns apart, limit is {max_gap_ns} ns")]
    Gap { gap_ns: i64, max_gap_ns: i64 },
    #[error("timestamps must be strictly increasing (entry {index}: {t_ns} ns after {prev_ns} ns)")]
    Unsorted { index: usize, t_ns: i64, prev_ns: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSample {
    pub t_ns: i64,
    #[serde(rename = "angles_rad")]
    pub angles: JointAngles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointLog {
    samples: Vec<JointSample>,
}

impl JointLog {
    pub fn new(samples: Vec<JointSample>) -> Result<Self, SyncError> {
        check_increasing(samples.iter().map(|s| s.t_ns))?;
        Ok(JointLog { samples })
    }

    pub fn samples(&self) -> &[JointSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean sample rate over the log span; 0 for fewer than two samples.
    pub fn nominal_rate_hz(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) if b.t_ns > a.t_ns => {
                (self.samples.len() - 1) as f64 * 1e9 / (b.t_ns - a.t_ns) as f64
            }
            _ => 0.0,
        }
    }

    pub fn span(&self) -> Option<(i64, i64)> {
        Some((self.samples.first()?.t_ns, self.samples.last()?.t_ns))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub t_ns: i64,
    pub frame_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLog {
    frames: Vec<FrameRecord>,
}

impl FrameLog {
    pub fn new(frames: Vec<FrameRecord>) -> Result<Self, SyncError> {
        check_increasing(frames.iter().map(|f| f.t_ns))?;
        Ok(FrameLog { frames })
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn check_increasing(ts: impl Iterator<Item = i64>) -> Result<(), SyncError> {
    let mut prev: Option<i64> = None;
    for (index, t_ns) in ts.enumerate() {
        if let Some(prev_ns) = prev {
            if t_ns <= prev_ns {
                return Err(SyncError::Unsorted { index, t_ns, prev_ns });
            }
        }
        prev = Some(t_ns);
    }
    Ok(())
}

/// How joint angles are read off between two samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
    /// Closer sample wins; ties go to the earlier one.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncedPacket {
    pub frame_id: u64,
    pub t_ns: i64,
    #[serde(rename = "angles_rad")]
    pub angles: JointAngles,
    pub gap_ns: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    #[serde(rename = "out-of-span")]
    OutOfSpan,
    #[serde(rename = "gap")]
    Gap,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::OutOfSpan => "out-of-span",
            DropReason::Gap => "gap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroppedFrame {
    pub frame_id: u64,
    pub t_ns: i64,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyncReport {
    pub packets: Vec<SyncedPacket>,
    pub dropped: Vec<DroppedFrame>,
}

/// Reads the joint state at `t_ns`. An exact sample hit returns that sample
/// with gap 0; otherwise the gap is the distance between the two bracketing
/// samples.
pub fn interpolate_joints(
    log: &JointLog,
    t_ns: i64,
    max_gap_ns: i64,
    policy: Interpolation,
) -> Result<(JointAngles, i64), SyncError> {
    let (first_ns, last_ns) = log.span().ok_or(SyncError::EmptyLog)?;
    if t_ns < first_ns || t_ns > last_ns {
        return Err(SyncError::OutOfRange { t_ns, first_ns, last_ns });
    }
    // index of the first sample strictly after t
    let hi = log.samples.partition_point(|s| s.t_ns <= t_ns);
    blend(&log.samples, hi - 1, t_ns, max_gap_ns, policy)
}

/// `lo` is the last sample with `t ≤ t_ns`.
fn blend(
    samples: &[JointSample],
    lo: usize,
    t_ns: i64,
    max_gap_ns: i64,
    policy: Interpolation,
) -> Result<(JointAngles, i64), SyncError> {
    let a = &samples[lo];
    if a.t_ns == t_ns {
        return Ok((a.angles, 0));
    }
    let b = &samples[lo + 1];
    let gap_ns = b.t_ns - a.t_ns;
    if gap_ns > max_gap_ns {
        return Err(SyncError::Gap { gap_ns, max_gap_ns });
    }
    let angles = match policy {
        Interpolation::Linear => {
            let f = (t_ns - a.t_ns) as f64 / gap_ns as f64;
            a.angles.lerp(&b.angles, f)
        }
        Interpolation::Nearest => {
            if t_ns - a.t_ns <= b.t_ns - t_ns {
                a.angles
            } else {
                b.angles
            }
        }
    };
    Ok((angles, gap_ns))
}

/// One packet per usable frame, in frame order, via a single forward merge
/// over both logs.
pub fn synchronize_streams(
    frames: &FrameLog,
    joints: &JointLog,
    max_gap_ns: i64,
    policy: Interpolation,
) -> Result<SyncReport, SyncError> {
    let (first_ns, last_ns) = joints.span().ok_or(SyncError::EmptyLog)?;
    let samples = joints.samples();
    let mut report = SyncReport::default();
    let mut lo = 0usize;
    for frame in frames.frames() {
        if frame.t_ns < first_ns || frame.t_ns > last_ns {
            report.dropped.push(DroppedFrame {
                frame_id: frame.frame_id,
                t_ns: frame.t_ns,
                reason: DropReason::OutOfSpan,
            });
            continue;
        }
        while lo + 1 < samples.len() && samples[lo + 1].t_ns <= frame.t_ns {
            lo += 1;
        }
        match blend(samples, lo, frame.t_ns, max_gap_ns, policy) {
            Ok((angles, gap_ns)) => report.packets.push(SyncedPacket {
                frame_id: frame.frame_id,
                t_ns: frame.t_ns,
                angles,
                gap_ns,
            }),
            Err(_) => report.dropped.push(DroppedFrame {
                frame_id: frame.frame_id,
                t_ns: frame.t_ns,
                reason: DropReason::Gap,
            }),
        }
    }
    Ok(report)
}
