//! Completion-time model for recognizing a recording of `T` seconds either by
//! uploading the whole file after recording or by streaming `d`-second chunks
//! while recording.
//!
//! Streaming: chunk `i` is ready when recorded, `min((i+1)·d, T)`; its upload
//! occupies the link for `n + len_i/rate` starting no earlier than the previous
//! upload's end; decoding takes `p` per chunk, in order, starting no earlier
//! than its upload end. Completion is the last decode end plus `f`.
//!
//! Whole file: `T + n + T/rate + ceil(T/d)·p + f`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyParams {
    pub recording_duration: f64,
    pub chunk_duration: f64,
    /// Multiple of real time; `f64::INFINITY` models a link with no transfer time.
    pub upload_rate: f64,
    pub per_message_overhead: f64,
    pub per_chunk_processing: f64,
    pub finalization: f64,
}

impl LatencyParams {
    pub fn is_valid(&self) -> bool {
        self.recording_duration >= 0.0
            && self.chunk_duration > 0.0
            && self.upload_rate > 0.0
            && self.per_message_overhead >= 0.0
            && self.per_chunk_processing >= 0.0
            && self.finalization >= 0.0
    }

    pub fn chunk_count(&self) -> usize {
        if self.recording_duration <= 0.0 {
            return 0;
        }
        (self.recording_duration / self.chunk_duration - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UploadMode {
    Streaming,
    WholeFile,
}

pub fn simulate_latency(params: &LatencyParams, mode: UploadMode) -> f64 {
    let LatencyParams {
        recording_duration: t,
        chunk_duration: d,
        upload_rate: rate,
        per_message_overhead: n,
        per_chunk_processing: p,
        finalization: f,
    } = *params;
    let k = params.chunk_count();
    if k == 0 {
        return f;
    }
    match mode {
        UploadMode::WholeFile => t + n + t / rate + k as f64 * p + f,
        UploadMode::Streaming => {
            let mut upload_end = 0.0f64;
            let mut decode_end = 0.0f64;
            for i in 0..k {
                let start = i as f64 * d;
                let ready = ((i + 1) as f64 * d).min(t);
                let len = ready - start;
                upload_end = ready.max(upload_end) + n + len / rate;
                decode_end = upload_end.max(decode_end) + p;
            }
            decode_end + f
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::cmp::Ordering as CmpOrdering;
    use std::collections::{BinaryHeap, VecDeque};

    #[derive(Debug, PartialEq)]
    struct Ev {
        at: f64,
        order: u64,
        kind: EvKind,
    }
    #[derive(Debug, PartialEq)]
    enum EvKind {
        Recorded(usize),
        Uploaded(usize),
        Decoded(usize),
    }
    impl Eq for Ev {}
    impl PartialOrd for Ev {
        fn partial_cmp(&self, o: &Self) -> Option<CmpOrdering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Ev {
        fn cmp(&self, o: &Self) -> CmpOrdering {
            o.at.total_cmp(&self.at).then(o.order.cmp(&self.order))
        }
    }

    /// Event-queue simulation with explicit link and decoder resources.
    fn oracle(p: &LatencyParams, mode: UploadMode) -> f64 {
        let t = p.recording_duration;
        let k = if t <= 0.0 {
            0
        } else {
            (t / p.chunk_duration - 1e-9).ceil().max(1.0) as usize
        };
        if k == 0 {
            return p.finalization;
        }
        // messages: (payload seconds, decode units)
        let messages: Vec<(f64, f64, usize)> = match mode {
            UploadMode::Streaming => (0..k)
                .map(|i| {
                    let a = i as f64 * p.chunk_duration;
                    let b = ((i + 1) as f64 * p.chunk_duration).min(t);
                    (b, b - a, 1)
                })
                .collect(),
            UploadMode::WholeFile => vec![(t, t, k)],
        };
        let mut q = BinaryHeap::new();
        let mut order = 0;
        let mut push = |q: &mut BinaryHeap<Ev>, at, kind| {
            order += 1;
            q.push(Ev { at, order, kind });
        };
        for (i, m) in messages.iter().enumerate() {
            push(&mut q, m.0, EvKind::Recorded(i));
        }
        let mut link_busy = false;
        let mut link_q: VecDeque<usize> = VecDeque::new();
        let mut dec_busy = false;
        let mut dec_q: VecDeque<usize> = VecDeque::new();
        let mut last = 0.0;
        let mut decoded = 0;
        while let Some(ev) = q.pop() {
            let now = ev.at;
            match ev.kind {
                EvKind::Recorded(i) => link_q.push_back(i),
                EvKind::Uploaded(i) => {
                    link_busy = false;
                    dec_q.push_back(i);
                }
                EvKind::Decoded(_) => {
                    dec_busy = false;
                    decoded += 1;
                    last = now;
                }
            }
            if !link_busy {
                if let Some(i) = link_q.pop_front() {
                    link_busy = true;
                    let dur = p.per_message_overhead + messages[i].1 / p.upload_rate;
                    push(&mut q, now + dur, EvKind::Uploaded(i));
                }
            }
            if !dec_busy {
                if let Some(i) = dec_q.pop_front() {
                    dec_busy = true;
                    let dur = p.per_chunk_processing * messages[i].2 as f64;
                    push(&mut q, now + dur, EvKind::Decoded(i));
                }
            }
        }
        assert_eq!(decoded, messages.len());
        last + p.finalization
    }

    fn params(t: f64, d: f64, rate: f64, n: f64, p: f64, f: f64) -> LatencyParams {
        LatencyParams {
            recording_duration: t,
            chunk_duration: d,
            upload_rate: rate,
            per_message_overhead: n,
            per_chunk_processing: p,
            finalization: f,
        }
    }

    #[test]
    fn worked_example() {
        let lp = params(4.0, 0.5, 1.0, 0.0, 0.0, 0.5);
        assert_eq!(oracle(&lp, UploadMode::WholeFile), 8.5);
        assert_eq!(oracle(&lp, UploadMode::Streaming), 5.0);
        assert_eq!(simulate_latency(&lp, UploadMode::WholeFile), 8.5);
        assert_eq!(simulate_latency(&lp, UploadMode::Streaming), 5.0);
    }

    #[test]
    fn nothing_recorded() {
        let lp = params(0.0, 0.5, 1.0, 0.0, 0.3, 0.7);
        assert_eq!(simulate_latency(&lp, UploadMode::WholeFile), 0.7);
        assert_eq!(simulate_latency(&lp, UploadMode::Streaming), 0.7);
    }

    #[test]
    fn decoder_bound_pipeline() {
        // p = 10·d with an instantaneous link: the decoder is the bottleneck,
        // streaming only saves the recording time that overlaps decoding.
        let lp = params(4.0, 0.5, f64::INFINITY, 0.0, 5.0, 0.5);
        assert_eq!(oracle(&lp, UploadMode::Streaming), 41.0);
        assert_eq!(oracle(&lp, UploadMode::WholeFile), 44.5);
        assert_eq!(simulate_latency(&lp, UploadMode::Streaming), 41.0);
        assert_eq!(simulate_latency(&lp, UploadMode::WholeFile), 44.5);
        // single chunk: fully serialized, both modes equal
        let one = params(0.5, 0.5, f64::INFINITY, 0.0, 5.0, 0.5);
        assert_eq!(
            simulate_latency(&one, UploadMode::Streaming),
            simulate_latency(&one, UploadMode::WholeFile)
        );
    }

    #[test]
    fn per_message_overhead_can_favor_whole_file() {
        let lp = params(4.0, 0.5, f64::INFINITY, 1.0, 0.0, 0.0);
        assert_eq!(simulate_latency(&lp, UploadMode::WholeFile), 5.0);
        assert_eq!(simulate_latency(&lp, UploadMode::Streaming), 8.5);
        assert_eq!(oracle(&lp, UploadMode::Streaming), 8.5);
    }

    fn valid_params() -> impl Strategy<Value = LatencyParams> {
        (
            0.0..10.0f64,
            0.05..2.0f64,
            prop_oneof![0.1..5.0f64, Just(f64::INFINITY)],
            0.0..0.3f64,
            0.0..0.5f64,
            0.0..1.0f64,
        )
            .prop_map(|(t, d, r, n, p, f)| params(t, d, r, n, p, f))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn closed_form_matches_event_queue(lp in valid_params()) {
            for mode in [UploadMode::Streaming, UploadMode::WholeFile] {
                let a = simulate_latency(&lp, mode);
                let b = oracle(&lp, mode);
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b), "{mode:?}: {a} vs {b}");
            }
        }

        #[test]
        fn streaming_never_loses_without_message_overhead(mut lp in valid_params()) {
            lp.per_message_overhead = 0.0;
            prop_assert!(simulate_latency(&lp, UploadMode::Streaming)
                <= simulate_latency(&lp, UploadMode::WholeFile) + 1e-9);
        }

        #[test]
        fn monotone_in_each_parameter(lp in valid_params(), bump in 0.0..2.0f64, which in 0usize..4) {
            let mut hi = lp;
            match which {
                0 => hi.recording_duration += bump,
                1 => hi.per_message_overhead += bump,
                2 => hi.per_chunk_processing += bump,
                _ => hi.finalization += bump,
            }
            for mode in [UploadMode::Streaming, UploadMode::WholeFile] {
                prop_assert!(simulate_latency(&hi, mode) + 1e-9 >= simulate_latency(&lp, mode));
            }
        }
    }
}
