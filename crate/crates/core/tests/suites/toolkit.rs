//! Toolkit operations against straight-line array implementations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pstream::gen::{two_stream, Waveform};
use pstream::toolkit::{self, ToolkitParams};
use pstream::{
    ChecksumSink, CollectSink, Event, Execution, QueryBuilder, Scalar, SourceData, SourceSpec, StreamDescriptor,
    StreamId,
};

type Slots = Vec<Option<f64>>;

fn desc(p: i64) -> StreamDescriptor {
    StreamDescriptor::new(0, p).unwrap()
}

fn source<T: Scalar>(p: i64, slots: &Slots) -> SourceData<T> {
    let v: Vec<T> = slots.iter().map(|x| x.map_or(T::nan(), T::of)).collect();
    SourceData::dense(desc(p), 0, &v).unwrap()
}

fn run_one<T: Scalar>(
    p: i64,
    slots: &Slots,
    build: impl FnOnce(&mut QueryBuilder<T>, StreamId) -> StreamId,
) -> Vec<Event<T>> {
    let mut q = QueryBuilder::new();
    let s = q.source(SourceSpec::new("s", desc(p)));
    let out = build(&mut q, s);
    let plan = q.compile(out).unwrap();
    let data = [source::<T>(p, slots)];
    let mut exec = Execution::new(&plan, &data).unwrap();
    let mut sink = CollectSink::new();
    exec.run_eager(&mut sink).unwrap();
    let mut again = CollectSink::new();
    exec.run_targeted(&mut again).unwrap();
    assert_eq!(sink.events.len(), again.events.len());
    assert!(sink.events.iter().zip(&again.events).all(|(a, b)| a.bit_eq(b)));
    sink.events
}

/// Engine output on the slot grid `period`, as `(slot, value)` pairs.
fn values<T: Scalar>(events: &[Event<T>], period: i64) -> Vec<(i64, f64)> {
    events
        .iter()
        .map(|e| {
            assert_eq!(e.sync % period, 0);
            assert_eq!(e.duration, period, "event at {}", e.sync);
            (e.sync / period, e.payload[0].widen())
        })
        .collect()
}

fn expected(slots: &Slots) -> Vec<(i64, f64)> {
    slots
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i as i64, v)))
        .collect()
}

fn random_slots(rng: &mut ChaCha8Rng, n: usize) -> Slots {
    let gap_rate = rng.gen_range(0.0..0.3);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if rng.gen_bool(gap_rate * 0.2) {
            let run = rng.gen_range(1..12);
            for _ in 0..run {
                out.push(None);
            }
        } else {
            out.push(Some(rng.gen_range(-50.0..150.0f64).round() / 4.0));
        }
    }
    out.truncate(n);
    out
}

fn close(got: &[(i64, f64)], want: &[(i64, f64)], rel: f64, what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: count");
    for (g, w) in got.iter().zip(want) {
        assert_eq!(g.0, w.0, "{what}: slot");
        let tol = rel * w.1.abs().max(1.0);
        assert!(
            (g.1 - w.1).abs() <= tol,
            "{what}: slot {} got {} want {}",
            g.0,
            g.1,
            w.1
        );
    }
}

fn exact(got: &[(i64, f64)], want: &[(i64, f64)], what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: count {got:?} vs {want:?}");
    for (g, w) in got.iter().zip(want) {
        assert!(g.0 == w.0 && g.1.to_bits() == w.1.to_bits(), "{what}: {g:?} != {w:?}");
    }
}

// Reference implementations over plain slot arrays.

fn normalize_ref(x: &Slots, k: usize) -> Slots {
    let mut out = vec![None; x.len()];
    for (c, chunk) in x.chunks(k).enumerate() {
        let vals: Vec<f64> = chunk.iter().flatten().copied().collect();
        if vals.is_empty() {
            continue;
        }
        let n = vals.len() as f64;
        let mu = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
        for (i, v) in chunk.iter().enumerate() {
            if let Some(v) = v {
                out[c * k + i] = Some(if sd > 0.0 { (v - mu) / sd } else { 0.0 });
            }
        }
    }
    out
}

fn fir_ref(x: &Slots, taps: &[f64]) -> Slots {
    (0..x.len())
        .map(|i| {
            if i + 1 < taps.len() {
                return None;
            }
            let mut acc = 0.0;
            for (j, h) in taps.iter().enumerate() {
                acc += h * x[i - j]?;
            }
            Some(acc)
        })
        .collect()
}

/// Absent runs bounded by present slots on both sides, as `[start, end)` slot ranges.
fn bounded_gaps(x: &Slots) -> Vec<(usize, usize)> {
    let mut gaps = Vec::new();
    let mut i = 0;
    while i < x.len() {
        if x[i].is_some() {
            i += 1;
            continue;
        }
        let s = i;
        while i < x.len() && x[i].is_none() {
            i += 1;
        }
        if s > 0 && i < x.len() {
            gaps.push((s, i));
        }
    }
    gaps
}

fn fill_const_ref(x: &Slots, limit: usize, value: f64) -> Slots {
    let mut out = x.clone();
    for (s, e) in bounded_gaps(x) {
        if e - s <= limit {
            out[s..e].iter_mut().for_each(|v| *v = Some(value));
        }
    }
    out
}

fn fill_mean_ref(x: &Slots, k: usize) -> Slots {
    let mut out = x.clone();
    let means: Vec<Option<f64>> = x
        .chunks(k)
        .map(|c| {
            let v: Vec<f64> = c.iter().flatten().copied().collect();
            (!v.is_empty()).then(|| v.iter().fold(0.0, |a, b| a + b) / v.len() as f64)
        })
        .collect();
    for (s, e) in bounded_gaps(x) {
        if e - s <= k {
            for (i, slot) in out.iter_mut().enumerate().take(e).skip(s) {
                *slot = means[i / k];
            }
        }
    }
    out
}

fn resample_ref(x: &Slots, pin: i64, pout: i64) -> Vec<(i64, f64)> {
    let present: Vec<(i64, f64)> = x
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i as i64 * pin, v)))
        .collect();
    let Some(&(_, _)) = present.last() else {
        return Vec::new();
    };
    let end = x.len() as i64 * pin;
    let mut out = Vec::new();
    let mut t = 0;
    while t < end {
        let k = present.partition_point(|&(s, _)| s <= t);
        if k > 0 {
            let (t1, v1) = present[k - 1];
            if t1 == t {
                out.push((t / pout, v1));
            } else if let Some(&(t2, v2)) = present.get(k) {
                if t2 - t1 <= pin {
                    out.push((t / pout, v1 + (v2 - v1) * (t - t1) as f64 / (t2 - t1) as f64));
                }
            }
        }
        t += pout;
    }
    out
}

pub fn normalize_matches_reference() {
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = [1, 2, 4, 8][rng.gen_range(0..4)];
        let k = rng.gen_range(1..40);
        let n = rng.gen_range(1..3000);
        let x = random_slots(&mut rng, n);
        let got = run_one::<f64>(p, &x, |q, s| toolkit::normalize(q, s, k as i64 * p).unwrap());
        close(
            &values(&got, p),
            &expected(&normalize_ref(&x, k)),
            1e-9,
            &format!("seed {seed}"),
        );
    }
}

pub fn normalize_example() {
    let x: Slots = (1..=5).map(|v| Some(v as f64)).collect();
    let got = values(&run_one::<f64>(2, &x, |q, s| toolkit::normalize(q, s, 10).unwrap()), 2);
    let r = 2f64.sqrt();
    close(
        &got,
        &[(0, -r), (1, -r / 2.0), (2, 0.0), (3, r / 2.0), (4, r)],
        1e-12,
        "example",
    );

    let flat: Slots = vec![Some(3.0), None, Some(3.0)];
    let got = values(
        &run_one::<f64>(2, &flat, |q, s| toolkit::normalize(q, s, 6).unwrap()),
        2,
    );
    assert_eq!(got, vec![(0, 0.0), (2, 0.0)]);
}

pub fn normalize_statistics_in_single_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Slots = (0..20_000)
        .map(|_| Some(rng.gen_range(0.0..1000.0f32) as f64))
        .collect();
    let got = values(
        &run_one::<f32>(2, &x, |q, s| toolkit::normalize(q, s, 1000).unwrap()),
        2,
    );
    for chunk in got.chunks(500) {
        let n = chunk.len() as f64;
        let mu = chunk.iter().map(|v| v.1).sum::<f64>() / n;
        let sd = (chunk.iter().map(|v| (v.1 - mu).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mu.abs() <= 1e-5, "mean {mu}");
        assert!((sd - 1.0).abs() <= 1e-4, "std {sd}");
    }
}

pub fn pass_filter_matches_convolution() {
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = 2 * rng.gen_range(0..10) + 1;
        let taps: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = random_slots(&mut rng, 2000);
        let got = run_one::<f64>(2, &x, |q, s| toolkit::pass_filter(q, s, &taps).unwrap());
        close(
            &values(&got, 2),
            &expected(&fir_ref(&x, &taps)),
            1e-9,
            &format!("seed {seed}"),
        );
    }
}

pub fn pass_filter_examples() {
    let x: Slots = vec![Some(1.0), Some(3.0), Some(5.0), Some(7.0)];
    let got = values(
        &run_one::<f64>(2, &x, |q, s| toolkit::pass_filter(q, s, &[1.0]).unwrap()),
        2,
    );
    assert_eq!(got, expected(&x));
    let got = values(
        &run_one::<f64>(2, &x, |q, s| toolkit::pass_filter(q, s, &[0.5, 0.5]).unwrap()),
        2,
    );
    assert_eq!(got, vec![(1, 2.0), (2, 4.0), (3, 6.0)]);
}

pub fn lowpass_attenuates_the_stop_band() {
    let fs = 500.0;
    let taps = toolkit::lowpass(30.0, 101, fs).unwrap();
    assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(toolkit::lowpass(30.0, 100, fs).is_err());
    let tone = |hz: f64| -> Slots {
        (0..5000)
            .map(|i| Some((2.0 * std::f64::consts::PI * hz * i as f64 * 2.0 / 1000.0).sin()))
            .collect()
    };
    let rms = |hz: f64| {
        let x = tone(hz);
        let got = values(
            &run_one::<f64>(2, &x, |q, s| toolkit::pass_filter(q, s, &taps).unwrap()),
            2,
        );
        close(&got, &expected(&fir_ref(&x, &taps)), 1e-6, "two-tone");
        (got.iter().map(|v| v.1 * v.1).sum::<f64>() / got.len() as f64).sqrt()
    };
    let gain_db = 20.0 * (rms(5.0) / rms(100.0)).log10();
    assert!(gain_db >= 20.0, "{gain_db} dB");
}

pub fn fills_match_reference() {
    for seed in 0..60 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let p = [1, 2, 8][rng.gen_range(0..3)];
        let k = rng.gen_range(1..10);
        let x = random_slots(&mut rng, 2500);
        let got = run_one::<f64>(p, &x, |q, s| toolkit::fill_const(q, s, k as i64 * p, -1.0).unwrap());
        exact(
            &values(&got, p),
            &expected(&fill_const_ref(&x, k, -1.0)),
            &format!("const seed {seed}"),
        );
        let got = run_one::<f64>(p, &x, |q, s| toolkit::fill_mean(q, s, k as i64 * p).unwrap());
        exact(
            &values(&got, p),
            &expected(&fill_mean_ref(&x, k)),
            &format!("mean seed {seed}"),
        );
    }
}

pub fn fill_examples() {
    let x: Slots = vec![Some(1.0), None, None, Some(9.0)];
    let got = values(
        &run_one::<f64>(2, &x, |q, s| toolkit::fill_const(q, s, 4, 0.0).unwrap()),
        2,
    );
    assert_eq!(got, vec![(0, 1.0), (1, 0.0), (2, 0.0), (3, 9.0)]);
    let got = values(
        &run_one::<f64>(2, &x, |q, s| toolkit::fill_const(q, s, 2, 0.0).unwrap()),
        2,
    );
    assert_eq!(got, vec![(0, 1.0), (3, 9.0)]);

    let x: Slots = vec![Some(2.0), None, Some(4.0)];
    let got = values(&run_one::<f64>(2, &x, |q, s| toolkit::fill_mean(q, s, 6).unwrap()), 2);
    assert_eq!(got, vec![(0, 2.0), (1, 3.0), (2, 4.0)]);
}

pub fn resample_matches_reference() {
    for seed in 0..60 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let pin = [2, 4, 8, 10][rng.gen_range(0..4)];
        let pout = [1, 2, 3, 4, 8, 12][rng.gen_range(0..6)];
        let x = random_slots(&mut rng, 1500);
        let got = run_one::<f64>(pin, &x, |q, s| toolkit::resample(q, s, pout).unwrap());
        exact(
            &values(&got, pout),
            &resample_ref(&x, pin, pout),
            &format!("seed {seed} {pin}->{pout}"),
        );
    }
}

pub fn resample_examples() {
    let x: Slots = vec![Some(0.0), Some(8.0)];
    let got = values(&run_one::<f32>(8, &x, |q, s| toolkit::resample(q, s, 2).unwrap()), 2);
    assert_eq!(got, vec![(0, 0.0), (1, 2.0), (2, 4.0), (3, 6.0), (4, 8.0)]);

    let ramp: Slots = (0..5000).map(|i| Some((i * 8) as f64)).collect();
    let got = values(&run_one::<f32>(8, &ramp, |q, s| toolkit::resample(q, s, 2).unwrap()), 2);
    assert_eq!(got.len(), 4999 * 4 + 1);
    assert!(got.iter().all(|&(i, v)| v == (i * 2) as f64));

    let dense: Slots = (0..100).map(|i| Some(i as f64 * 0.5)).collect();
    let got = values(
        &run_one::<f32>(4, &dense, |q, s| toolkit::resample(q, s, 4).unwrap()),
        4,
    );
    assert_eq!(got, expected(&dense));
}

pub fn end_to_end_targeted_equals_eager() {
    let ts = two_stream(500.0, 125.0, 600_000, 3, 0.4, 5, Waveform::Sine { noise: 1.0 }).unwrap();
    let params = ToolkitParams {
        window: 1_000,
        ..ToolkitParams::default()
    };
    let (e, a) = toolkit::ecg_abp_specs();
    let mut q = QueryBuilder::<f32>::new();
    let ecg = q.source(e);
    let abp = q.source(a);
    let out = toolkit::end_to_end(&mut q, ecg, abp, &params).unwrap();
    let plan = q.compile(out).unwrap();
    let data = [ts.first.clone(), ts.second.clone()];
    let mut exec = Execution::new(&plan, &data).unwrap();
    let mut eager = ChecksumSink::new();
    let se = exec.run_eager(&mut eager).unwrap();
    let mut targeted = ChecksumSink::new();
    let st = exec.run_targeted(&mut targeted).unwrap();
    assert_eq!(eager.hash, targeted.hash);
    assert_eq!(eager.count, targeted.count);
    assert!(eager.count > 0);
    assert_eq!(se.total_windows(), st.total_windows());
    assert!(st.windows_processed < se.windows_processed);
    let both: i64 = ts.overlap.iter().map(|(s, e)| e - s).sum();
    assert_eq!(eager.count as i64, both / 2);
}
