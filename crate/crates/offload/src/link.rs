//! Deterministic point-to-point link emulation.
//!
//! The model is a single serializing channel: a frame occupies the link
//! for `frame_bytes * 8 / bandwidth` seconds starting when the link is
//! free, then arrives `base_latency` later. Frames queue FIFO; a dropped
//! frame still occupies the channel (the radio transmitted it, the far
//! end never saw it) and the drop is reported to the caller.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    /// Channel rate in bits per second. Must be positive; may be infinite
    /// for an ideal link that charges base latency only.
    pub bandwidth_bps: f64,
    /// Fixed one-way propagation delay in seconds, >= 0.
    pub base_latency_s: f64,
    /// Probability in [0, 1] that a frame is lost in flight.
    pub drop_prob: f64,
}

impl LinkSpec {
    pub fn new(bandwidth_bps: f64, base_latency_s: f64) -> Self {
        assert!(bandwidth_bps > 0.0, "bandwidth must be positive");
        assert!(base_latency_s >= 0.0, "latency must be non-negative");
        LinkSpec {
            bandwidth_bps,
            base_latency_s,
            drop_prob: 0.0,
        }
    }

    pub fn with_drop(mut self, drop_prob: f64) -> Self {
        assert!((0.0..=1.0).contains(&drop_prob), "drop_prob in [0,1]");
        self.drop_prob = drop_prob;
        self
    }

    /// Time the channel is occupied serializing `frame_bytes`.
    pub fn tx_time(&self, frame_bytes: usize) -> f64 {
        (frame_bytes as f64 * 8.0) / self.bandwidth_bps
    }
}

#[derive(Debug, Clone)]
pub struct LinkEmulator {
    pub spec: LinkSpec,
    busy_until: f64,
    sent_frames: u64,
    sent_bytes: u64,
    dropped_frames: u64,
}

impl LinkEmulator {
    pub fn new(spec: LinkSpec) -> Self {
        LinkEmulator {
            spec,
            busy_until: 0.0,
            sent_frames: 0,
            sent_bytes: 0,
            dropped_frames: 0,
        }
    }

    /// Offer a frame to the link at time `now`. Returns the delivery time
    /// at the far end, or `None` if the frame was dropped. `now` must not
    /// run backwards between calls.
    pub fn transmit(&mut self, frame_bytes: usize, now: f64, rng: &mut ChaCha8Rng) -> Option<f64> {
        let start = now.max(self.busy_until);
        self.busy_until = start + self.spec.tx_time(frame_bytes);
        self.sent_frames += 1;
        self.sent_bytes += frame_bytes as u64;
        if self.spec.drop_prob > 0.0 && rng.gen::<f64>() < self.spec.drop_prob {
            self.dropped_frames += 1;
            return None;
        }
        Some(self.busy_until + self.spec.base_latency_s)
    }

    /// Time at which the channel finishes serializing everything offered
    /// so far.
    pub fn busy_until(&self) -> f64 {
        self.busy_until
    }

    pub fn sent_bytes(&self) -> u64 {
        self.sent_bytes
    }

    pub fn dropped_frames(&self) -> u64 {
        self.dropped_frames
    }
}

/// One-shot form: delivery time of `frame` offered at time `now`.
pub fn link_transmit(
    link: &mut LinkEmulator,
    frame: &[u8],
    now: f64,
    rng: &mut ChaCha8Rng,
) -> Option<f64> {
    link.transmit(frame.len(), now, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{encode_frame, msg_type, WireFrame};
    use proptest::prelude::*;
    use rand::SeedableRng;

    const MBPS_867: f64 = 867.0e6;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn image_frame_takes_2_126_ms_at_867_mbps() {
        let mut link = LinkEmulator::new(LinkSpec::new(MBPS_867, 0.0));
        let frame = WireFrame::new(msg_type::DETECT_REQUEST, 0, 0, vec![0; 230_400]);
        let t = link_transmit(&mut link, &encode_frame(&frame), 0.0, &mut rng()).unwrap();
        assert!((t - 2.126e-3).abs() < 1.0e-6, "got {t}");
    }

    #[test]
    fn stereo_frame_plus_5ms_lands_at_9_25_ms() {
        let mut link = LinkEmulator::new(LinkSpec::new(MBPS_867, 5.0e-3));
        let frame = WireFrame::new(msg_type::IMAGE_PAIR, 0, 0, vec![0; 460_800]);
        let bytes = encode_frame(&frame);
        assert_eq!(bytes.len(), 460_826);
        let t = link_transmit(&mut link, &bytes, 0.0, &mut rng()).unwrap();
        let expected = 5.0e-3 + 460_826.0 * 8.0 / MBPS_867;
        assert!((t - expected).abs() < 1.0e-12);
        assert!((t - 9.2521e-3).abs() < 1.0e-6, "got {t}");
        assert!((t - 9.25e-3).abs() < 0.1e-3);
    }

    #[test]
    fn empty_frame_cost_is_latency_plus_26_bytes() {
        let mut link = LinkEmulator::new(LinkSpec::new(MBPS_867, 5.0e-3));
        let beat = encode_frame(&WireFrame::new(msg_type::HEARTBEAT, 0, 0, vec![]));
        let t = link_transmit(&mut link, &beat, 0.0, &mut rng()).unwrap();
        let expected = 5.0e-3 + 26.0 * 8.0 / MBPS_867;
        assert!((t - expected).abs() < 1.0e-12);
        assert!(t > 5.0e-3 && t < 5.01e-3);
    }

    #[test]
    fn back_to_back_frames_arrive_in_fifo_order_spaced_by_tx_time() {
        let spec = LinkSpec::new(1.0e6, 2.0e-3);
        let mut link = LinkEmulator::new(spec);
        let frame = vec![0u8; 1000];
        let mut r = rng();
        let times: Vec<f64> = (0..4)
            .map(|_| link_transmit(&mut link, &frame, 0.0, &mut r).unwrap())
            .collect();
        let tx = spec.tx_time(1000);
        for (i, t) in times.iter().enumerate() {
            let expected = (i + 1) as f64 * tx + 2.0e-3;
            assert!((t - expected).abs() < 1.0e-12, "frame {i}: {t}");
        }
        for pair in times.windows(2) {
            assert!(pair[0] < pair[1]);
        }
    }

    #[test]
    fn idle_gaps_do_not_carry_credit() {
        let spec = LinkSpec::new(1.0e6, 0.0);
        let mut link = LinkEmulator::new(spec);
        let mut r = rng();
        let t0 = link.transmit(1000, 0.0, &mut r).unwrap();
        let t1 = link.transmit(1000, 1.0, &mut r).unwrap();
        assert!((t0 - 0.008).abs() < 1.0e-12);
        assert!((t1 - 1.008).abs() < 1.0e-12);
    }

    #[test]
    fn measured_throughput_matches_spec_within_2_percent() {
        let spec = LinkSpec::new(MBPS_867, 5.0e-3);
        let mut link = LinkEmulator::new(spec);
        let frame_len = 460_826;
        let mut r = rng();
        let horizon = 10.0;
        let mut delivered_bits = 0f64;
        loop {
            let t = link.transmit(frame_len, 0.0, &mut r).unwrap();
            if t > horizon + 5.0e-3 {
                break;
            }
            delivered_bits += frame_len as f64 * 8.0;
        }
        let measured = delivered_bits / horizon;
        let err = (measured - MBPS_867).abs() / MBPS_867;
        assert!(err < 0.02, "throughput {measured} err {err}");
    }

    #[test]
    fn drop_probability_extremes_behave() {
        let mut always = LinkEmulator::new(LinkSpec::new(1.0e6, 0.0).with_drop(1.0));
        let mut never = LinkEmulator::new(LinkSpec::new(1.0e6, 0.0));
        let mut r = rng();
        for _ in 0..20 {
            assert!(always.transmit(100, 0.0, &mut r).is_none());
        }
        assert_eq!(always.dropped_frames(), 20);
        // drop_prob == 0 must not consume randomness.
        let mut r0 = rng();
        let mut r1 = rng();
        for _ in 0..20 {
            assert!(never.transmit(100, 0.0, &mut r0).is_some());
        }
        assert_eq!(r0.gen::<u64>(), r1.gen::<u64>());
    }

    #[test]
    fn seeded_drops_are_reproducible_and_still_occupy_the_channel() {
        let spec = LinkSpec::new(1.0e6, 0.0).with_drop(0.5);
        let run = |seed: u64| {
            let mut link = LinkEmulator::new(spec);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| link.transmit(500, 0.0, &mut r))
                .collect::<Vec<_>>()
        };
        let a = run(9);
        assert_eq!(a, run(9));
        let drops = a.iter().filter(|d| d.is_none()).count();
        assert!(drops > 5 && drops < 45, "drops {drops}");
        // Channel time advances for dropped frames too: the i-th frame's
        // delivery (when it survives) reflects all i-1 earlier frames.
        for (i, d) in a.iter().enumerate() {
            if let Some(t) = d {
                assert!((t - (i + 1) as f64 * spec.tx_time(500)).abs() < 1.0e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn deliveries_are_fifo_and_never_beat_physics(
            sizes in proptest::collection::vec(1usize..10_000, 1..40),
            gaps in proptest::collection::vec(0.0f64..0.01, 1..40),
        ) {
            let spec = LinkSpec::new(10.0e6, 1.0e-3);
            let mut link = LinkEmulator::new(spec);
            let mut r = rng();
            let mut now = 0.0;
            let mut last_delivery = 0.0;
            for (i, &len) in sizes.iter().enumerate() {
                now += gaps[i % gaps.len()];
                let t = link.transmit(len, now, &mut r).unwrap();
                prop_assert!(t >= now + spec.tx_time(len) + spec.base_latency_s - 1.0e-15);
                prop_assert!(t >= last_delivery);
                last_delivery = t;
            }
        }
    }
}
