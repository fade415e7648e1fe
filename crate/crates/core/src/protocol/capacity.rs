use std::collections::VecDeque;

use crate::error::{check, ParamError};

/// Host processing limit.
///
/// A single server works through completed frames in arrival order. A frame
/// carrying `b` detection reports takes `b / service_rate_bps` seconds, so
/// the processed report rate can never exceed `service_rate_bps`. A frame
/// that arrives while `queue_depth` frames already wait behind the one in
/// service is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityModel {
    pub enabled: bool,
    pub service_rate_bps: f64,
    pub queue_depth: usize,
}

impl Default for CapacityModel {
    fn default() -> Self {
        CapacityModel {
            enabled: true,
            service_rate_bps: 1.0e6,
            queue_depth: 64,
        }
    }
}

impl CapacityModel {
    pub fn disabled() -> Self {
        CapacityModel {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        check(
            self.service_rate_bps > 0.0 && self.service_rate_bps.is_finite(),
            "service_rate_bps",
            self.service_rate_bps,
            "must be finite and > 0",
        )
    }
}

/// A frame handed to the host: completion time and report count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameCompletion {
    pub frame_number: u32,
    pub time_s: f64,
    pub payload_bits: u64,
}

/// Incremental form of [`apply_capacity`].
#[derive(Debug, Clone)]
pub struct CapacityQueue {
    model: CapacityModel,
    /// Finish times (ps) of the frames in the system, oldest first.
    in_system: VecDeque<u64>,
}

impl CapacityQueue {
    pub fn new(model: CapacityModel) -> Self {
        CapacityQueue {
            model,
            in_system: VecDeque::new(),
        }
    }

    /// True if the frame is accepted for processing.
    pub fn offer(&mut self, time_s: f64, payload_bits: u64) -> bool {
        if !self.model.enabled {
            return true;
        }
        // integer picoseconds keep back-to-back frames from tripping on rounding
        let now = (time_s * 1e12).round() as u64;
        while self.in_system.front().is_some_and(|&done| done <= now) {
            self.in_system.pop_front();
        }
        if self.in_system.len() > self.model.queue_depth {
            return false;
        }
        let start = self.in_system.back().map_or(now, |&t| t.max(now));
        let service = (payload_bits as f64 * 1e12 / self.model.service_rate_bps).round() as u64;
        self.in_system.push_back(start + service);
        true
    }
}

/// Splits time-ordered completions into processed and dropped frames,
/// preserving order within each.
pub fn apply_capacity(offered: &[FrameCompletion], model: &CapacityModel) -> (Vec<u32>, Vec<u32>) {
    let mut queue = CapacityQueue::new(model.clone());
    let mut processed = Vec::new();
    let mut dropped = Vec::new();
    for c in offered {
        if queue.offer(c.time_s, c.payload_bits) {
            processed.push(c.frame_number);
        } else {
            dropped.push(c.frame_number);
        }
    }
    (processed, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(n: u32, interval_s: f64, bits: u64) -> Vec<FrameCompletion> {
        (0..n)
            .map(|i| FrameCompletion {
                frame_number: i,
                time_s: (i + 1) as f64 * interval_s,
                payload_bits: bits,
            })
            .collect()
    }

    #[test]
    fn light_load_never_drops() {
        let model = CapacityModel {
            queue_depth: 0,
            ..Default::default()
        };
        // 10 bits every 100 µs is 1 % of capacity
        let (p, d) = apply_capacity(&uniform(1000, 1e-4, 10), &model);
        assert_eq!((p.len(), d.len()), (1000, 0));
    }

    #[test]
    fn double_load_with_no_queue_drops_half() {
        let model = CapacityModel {
            service_rate_bps: 1e6,
            queue_depth: 0,
            enabled: true,
        };
        // each frame needs 2 µs of service, one arrives every 1 µs
        let (_, d) = apply_capacity(&uniform(10_000, 1e-6, 2), &model);
        let frac = d.len() as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn disabled_model_accepts_everything() {
        let (p, d) = apply_capacity(&uniform(100, 1e-9, 1_000_000), &CapacityModel::disabled());
        assert_eq!((p.len(), d.len()), (100, 0));
    }

    #[test]
    fn saturated_throughput_equals_service_rate() {
        let model = CapacityModel::default();
        let offered = uniform(100_000, 1e-5, 30); // 3 Mbps offered for 1 s
        let (p, _) = apply_capacity(&offered, &model);
        let rate = p.len() as f64 * 30.0;
        assert!((rate / 1e6 - 1.0).abs() < 0.01, "{rate}");
    }

    #[test]
    fn validation() {
        assert!(CapacityModel::default().validate().is_ok());
        let bad = CapacityModel {
            service_rate_bps: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn conserves_and_preserves_order(
            gaps in prop::collection::vec((0.0f64..2e-5, 0u64..40), 0..300),
            depth in 0usize..4,
        ) {
            let mut t = 0.0;
            let offered: Vec<FrameCompletion> = gaps
                .iter()
                .enumerate()
                .map(|(i, &(g, bits))| {
                    t += g;
                    FrameCompletion { frame_number: i as u32, time_s: t, payload_bits: bits }
                })
                .collect();
            let model = CapacityModel { queue_depth: depth, ..Default::default() };
            let (p, d) = apply_capacity(&offered, &model);
            prop_assert_eq!(p.len() + d.len(), offered.len());
            prop_assert!(p.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(d.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
