//! Every primitive operator against a brute-force implementation over plain
//! event lists.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pstream::{
    Agg, CollectSink, Event, Execution, JoinMode, QueryBuilder, SliceCtx, SliceOut, SourceData, SourceSpec,
    StreamDescriptor, StreamId, TransformSpec,
};

type Ev = Event<f64>;

const TRIALS: u64 = 200;

#[derive(Clone)]
struct Stream {
    spec: SourceSpec,
    events: Vec<Ev>,
}

fn random_stream(rng: &mut ChaCha8Rng, name: &str, exact_durations: bool) -> Stream {
    let period = [1, 2, 3, 4, 5, 6, 8, 10][rng.gen_range(0..8)];
    let offset = rng.gen_range(-20..20);
    let slots = rng.gen_range(0..=1000 / period.max(1) as usize).min(1000);
    let density = rng.gen_range(0.2..1.0);
    let mut events = Vec::new();
    let mut i = 0;
    while i < slots {
        if rng.gen_bool(0.03) {
            i += rng.gen_range(1..40);
            continue;
        }
        if rng.gen_bool(density) {
            let d = if exact_durations {
                period
            } else {
                rng.gen_range(1..=period)
            };
            let v = (rng.gen_range(-1000..1000) as f64) / 8.0;
            events.push(Ev::scalar(offset + i as i64 * period, d, v));
        }
        i += 1;
    }
    let desc = StreamDescriptor::new(offset, period).unwrap();
    let mut spec = SourceSpec::new(name, desc);
    if !exact_durations {
        spec = spec.with_grain(1);
    }
    Stream { spec, events }
}

fn run(q: QueryBuilder<f64>, out: StreamId, inputs: &[&Stream]) -> (Vec<Ev>, i64) {
    let plan = q.compile(out).unwrap();
    let data: Vec<SourceData<f64>> = inputs
        .iter()
        .map(|s| SourceData::from_events(s.spec.descriptor, 1, s.events.clone()).unwrap())
        .collect();
    let mut exec = Execution::new(&plan, &data).unwrap();
    let mut eager = CollectSink::new();
    exec.run_eager(&mut eager).unwrap();
    let mut targeted = CollectSink::new();
    exec.run_targeted(&mut targeted).unwrap();
    assert_same(&eager.events, &targeted.events, "targeted vs eager");
    (eager.events, plan.sink_edge().dimension)
}

fn assert_same(got: &[Ev], want: &[Ev], what: &str) {
    let brief = |v: &[Ev]| {
        v.iter()
            .take(12)
            .map(|e| (e.sync, e.duration, e.payload.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(
        got.len(),
        want.len(),
        "{what}: count\n got {:?}\nwant {:?}",
        brief(got),
        brief(want)
    );
    for (g, w) in got.iter().zip(want) {
        assert!(g.bit_eq(w), "{what}: {g:?} != {w:?}");
    }
}

fn sorted(mut v: Vec<Ev>) -> Vec<Ev> {
    v.sort_by_key(|e| e.sync);
    v
}

fn for_trials(mut f: impl FnMut(&mut ChaCha8Rng, u64)) {
    for seed in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        f(&mut rng, seed);
    }
}

fn single(build: impl Fn(&mut QueryBuilder<f64>, StreamId) -> StreamId, oracle: impl Fn(&Stream) -> Vec<Ev>) {
    for_trials(|rng, seed| {
        let exact = rng.gen_bool(0.5);
        let s = random_stream(rng, "s", exact);
        let mut q = QueryBuilder::new();
        let src = q.source(s.spec.clone());
        let out = build(&mut q, src);
        let (got, _) = run(q, out, &[&s]);
        assert_same(&got, &sorted(oracle(&s)), &format!("seed {seed}"));
    });
}

pub fn select() {
    single(
        |q, s| q.select(s, 1, |t, x, o| o[0] = x[0] * 2.0 + t as f64),
        |s| {
            s.events
                .iter()
                .map(|e| Ev::scalar(e.sync, e.duration, e.payload[0] * 2.0 + e.sync as f64))
                .collect()
        },
    );
}

pub fn where_predicate() {
    single(
        |q, s| q.filter(s, |_, x| x[0] > 0.0),
        |s| s.events.iter().filter(|e| e.payload[0] > 0.0).cloned().collect(),
    );
}

pub fn shift() {
    for k in [-7, 0, 6, 13] {
        single(
            |q, s| q.shift(s, k),
            |s| {
                s.events
                    .iter()
                    .map(|e| Ev::new(e.sync + k, e.duration, e.payload.clone()))
                    .collect()
            },
        );
    }
}

pub fn alter_duration() {
    single(
        |q, s| q.alter_duration(s, 1),
        |s| s.events.iter().map(|e| Ev::new(e.sync, 1, e.payload.clone())).collect(),
    );
}

pub fn alter_period() {
    for p_new in [1, 2, 3, 7] {
        for_trials(|rng, seed| {
            let s = random_stream(rng, "s", rng.clone().gen_bool(0.5));
            let (off, p) = (s.spec.descriptor.offset, s.spec.descriptor.period);
            let mut q = QueryBuilder::new();
            let src = q.source(s.spec.clone());
            let out = q.alter_period(src, p_new);
            let (got, _) = run(q, out, &[&s]);
            let want: Vec<Ev> = s
                .events
                .iter()
                .map(|e| {
                    Ev::new(
                        off + (e.sync - off) / p * p_new,
                        e.duration.min(p_new),
                        e.payload.clone(),
                    )
                })
                .collect();
            assert_same(&got, &want, &format!("seed {seed} p_new {p_new}"));
        });
    }
}

fn chop_oracle(events: &[Ev], origin: i64, c: i64) -> Vec<Ev> {
    let mut out = Vec::new();
    for e in events {
        let mut start = e.sync;
        while start < e.end() {
            let k = (start - origin).div_euclid(c) + 1;
            let end = (origin + k * c).min(e.end());
            out.push(Ev::new(start, end - start, e.payload.clone()));
            start = end;
        }
    }
    out
}

pub fn chop() {
    for c in [1, 3, 4, 10] {
        single(
            |q, s| q.chop(s, c),
            |s| chop_oracle(&s.events, s.spec.descriptor.offset, c),
        );
    }
}

fn agg_oracle(s: &Stream, w: i64, p: i64, f: impl Fn(&[f64]) -> f64) -> Vec<Ev> {
    let off = s.spec.descriptor.offset;
    let Some(first) = s.events.first() else {
        return Vec::new();
    };
    let last = s.events.last().unwrap().sync;
    let mut t = off + (first.sync - w + 1 - off).div_euclid(p) * p;
    let mut out = Vec::new();
    while t <= last {
        let vals: Vec<f64> = s
            .events
            .iter()
            .filter(|e| e.sync >= t && e.sync < t + w)
            .map(|e| e.payload[0])
            .collect();
        if !vals.is_empty() {
            out.push(Ev::scalar(t, p, f(&vals)));
        }
        t += p;
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn aggregate() {
    type F = fn(&[f64]) -> f64;
    let cases: Vec<(Agg<f64>, F)> = vec![
        (Agg::Sum, |v| v.iter().sum()),
        (Agg::Max, |v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        (Agg::Min, |v| v.iter().copied().fold(f64::INFINITY, f64::min)),
        (Agg::Mean, mean),
        (Agg::Count, |v| v.len() as f64),
        (Agg::Std, |v| {
            let m = mean(v);
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
        }),
        (
            Agg::Custom {
                width: 1,
                f: Arc::new(|_, it, o| {
                    let mut last = None;
                    for e in it {
                        last = Some(e.payload[0]);
                    }
                    last.map(|v| o[0] = v).is_some()
                }),
            },
            |v| *v.last().unwrap(),
        ),
    ];
    for (agg, f) in cases {
        for_trials(|rng, seed| {
            let s = random_stream(rng, "s", true);
            let per = s.spec.descriptor.period;
            let p = per * rng.gen_range(1..6);
            let w = p + per * rng.gen_range(0..8);
            let mut q = QueryBuilder::new();
            let src = q.source(s.spec.clone());
            let out = q.aggregate(src, w, p, agg.clone());
            let (got, _) = run(q, out, &[&s]);
            assert_same(
                &got,
                &agg_oracle(&s, w, p, f),
                &format!("{agg:?} seed {seed} w {w} p {p}"),
            );
        });
    }
}

fn pair(l: Option<&Ev>, r: Option<&Ev>) -> Vec<f64> {
    vec![
        l.map_or(f64::NAN, |e| e.payload[0]),
        r.map_or(f64::NAN, |e| e.payload[0]),
    ]
}

/// Sub-intervals of `e` not covered by any event of `others`.
fn uncovered(e: &Ev, others: &[Ev]) -> Vec<(i64, i64)> {
    let mut pieces = Vec::new();
    let mut cur = e.sync;
    let mut covering: Vec<&Ev> = others.iter().filter(|o| o.sync < e.end() && o.end() > e.sync).collect();
    covering.sort_by_key(|o| o.sync);
    for o in covering {
        if o.sync > cur {
            pieces.push((cur, o.sync));
        }
        cur = cur.max(o.end());
    }
    if cur < e.end() {
        pieces.push((cur, e.end()));
    }
    pieces
}

fn join_oracle(l: &[Ev], r: &[Ev], mode: JoinMode) -> Vec<Ev> {
    let mut out = Vec::new();
    for a in l {
        for b in r {
            let s = a.sync.max(b.sync);
            let e = a.end().min(b.end());
            if s < e {
                out.push(Ev::new(s, e - s, pair(Some(a), Some(b))));
            }
        }
    }
    if mode != JoinMode::Inner {
        for a in l {
            for (s, e) in uncovered(a, r) {
                out.push(Ev::new(s, e - s, pair(Some(a), None)));
            }
        }
    }
    if mode == JoinMode::Outer {
        for b in r {
            for (s, e) in uncovered(b, l) {
                out.push(Ev::new(s, e - s, pair(None, Some(b))));
            }
        }
    }
    sorted(out)
}

fn two_streams(rng: &mut ChaCha8Rng) -> (Stream, Stream) {
    let exact = rng.gen_bool(0.5);
    let a = random_stream(rng, "l", exact);
    let exact = rng.gen_bool(0.5);
    let b = random_stream(rng, "r", exact);
    (a, b)
}

pub fn join() {
    for mode in [JoinMode::Inner, JoinMode::Left, JoinMode::Outer] {
        for_trials(|rng, seed| {
            let (a, b) = two_streams(rng);
            let mut q = QueryBuilder::new();
            let l = q.source(a.spec.clone());
            let r = q.source(b.spec.clone());
            let out = q.join_concat(l, r, mode);
            let (got, _) = run(q, out, &[&a, &b]);
            assert_same(
                &got,
                &join_oracle(&a.events, &b.events, mode),
                &format!("{mode:?} seed {seed}"),
            );
        });
    }
}

pub fn join_example_from_two_grids() {
    let left = Stream {
        spec: SourceSpec::new("l", StreamDescriptor::new(0, 2).unwrap()),
        events: (0..5).map(|i| Ev::scalar(i * 2, 2, i as f64)).collect(),
    };
    let right = Stream {
        spec: SourceSpec::new("r", StreamDescriptor::new(0, 5).unwrap()),
        events: vec![Ev::scalar(0, 5, 10.0), Ev::scalar(5, 5, 11.0)],
    };
    let mut q = QueryBuilder::new();
    let l = q.source(left.spec.clone());
    let r = q.source(right.spec.clone());
    let out = q.join_concat(l, r, JoinMode::Inner);
    let (got, _) = run(q, out, &[&left, &right]);
    let syncs: Vec<i64> = got.iter().map(|e| e.sync).collect();
    assert_eq!(syncs, vec![0, 2, 4, 5, 6, 8]);
}

pub fn clip_join() {
    for_trials(|rng, seed| {
        let (a, b) = two_streams(rng);
        let mut q = QueryBuilder::new();
        let l = q.source(a.spec.clone());
        let r = q.source(b.spec.clone());
        let out = q.clip_join_concat(l, r);
        let (got, dim) = run(q, out, &[&a, &b]);
        let want: Vec<Ev> = a
            .events
            .iter()
            .map(|e| {
                let next = b.events.iter().find(|x| x.sync >= e.sync && x.sync < e.sync + dim);
                let d = match next {
                    Some(x) if x.sync > e.sync && x.sync < e.end() => x.sync - e.sync,
                    _ => e.duration,
                };
                Ev::new(e.sync, d, pair(Some(e), next))
            })
            .collect();
        assert_same(&got, &want, &format!("seed {seed} dim {dim}"));
    });
}

pub fn multicast_self_join_is_identity() {
    single(
        |q, s| {
            let parts = q.multicast(s, 2);
            q.join(parts[0], parts[1], JoinMode::Inner, 1, |_, l, _, o| {
                o[0] = l.unwrap()[0]
            })
        },
        |s| s.events.clone(),
    );
}

pub fn transform_reverses_slices() {
    for_trials(|rng, seed| {
        let s = random_stream(rng, "s", rng.clone().gen_bool(0.5));
        let (off, p) = (s.spec.descriptor.offset, s.spec.descriptor.period);
        let len = rng.gen_range(1..7);
        let f = |ctx: &SliceCtx<'_, f64>, out: &mut SliceOut<'_, f64>| {
            for k in 0..ctx.len {
                let src = ctx.get((ctx.len - 1 - k) as isize);
                out.present[k] = src.is_some();
                if let Some(v) = src {
                    out.values[k] = v[0];
                }
            }
        };
        let mut q = QueryBuilder::new();
        let src = q.source(s.spec.clone());
        let out = q.transform(
            src,
            TransformSpec {
                slice: len * p,
                history: 0,
                lookahead: 0,
                f: Arc::new(f),
            },
        );
        let (got, _) = run(q, out, &[&s]);
        let at = |t: i64| s.events.iter().find(|e| e.sync == t);
        let mut want = Vec::new();
        let mut starts: Vec<i64> = s
            .events
            .iter()
            .map(|e| off + (e.sync - off).div_euclid(len * p) * len * p)
            .collect();
        starts.dedup();
        for start in starts {
            for k in 0..len {
                let t = start + k * p;
                if let Some(src) = at(start + (len - 1 - k) * p) {
                    let d = at(t).map_or(p, |e| e.duration);
                    want.push(Ev::new(t, d, src.payload.clone()));
                }
            }
        }
        assert_same(&got, &want, &format!("seed {seed} len {len}"));
    });
}

pub fn descriptors_match_output_syncs() {
    for_trials(|rng, seed| {
        let (a, b) = two_streams(rng);
        let mut q = QueryBuilder::new();
        let l = q.source(a.spec.clone());
        let r = q.source(b.spec.clone());
        let j = q.join_concat(l, r, JoinMode::Outer);
        let out = q.shift(j, -3);
        let plan_desc = {
            let mut q2 = QueryBuilder::<f64>::new();
            let l = q2.source(a.spec.clone());
            let r = q2.source(b.spec.clone());
            let j = q2.join_concat(l, r, JoinMode::Outer);
            let out = q2.shift(j, -3);
            q2.compile(out).unwrap().sink_props().descriptor
        };
        let (got, _) = run(q, out, &[&a, &b]);
        for e in &got {
            assert!(plan_desc.is_on_grid(e.sync), "seed {seed}: {} off {plan_desc}", e.sync);
        }
        for w in got.windows(2) {
            assert!(w[0].end() <= w[1].sync, "seed {seed}: overlap");
        }
    });
}
