//! Random query and dataset generators shared by the runtime tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use pstream::{toolkit, Agg, JoinMode, QueryBuilder, SourceData, SourceSpec, StreamDescriptor, StreamId};

/// Present ranges in ms shared by all sources of one pair.
pub fn random_layout(rng: &mut ChaCha8Rng) -> Vec<(i64, i64)> {
    let mut t = rng.gen_range(0..2_000);
    (0..rng.gen_range(1..=6))
        .map(|_| {
            let s = t;
            t += rng.gen_range(200..=4_000);
            let r = (s, t);
            t += rng.gen_range(0..20_000);
            r
        })
        .collect()
}

pub fn random_source(rng: &mut ChaCha8Rng, name: &str, layout: &[(i64, i64)]) -> (SourceSpec, SourceData<f32>) {
    let period = [1, 2, 4, 5, 8, 10][rng.gen_range(0..6)];
    let offset = rng.gen_range(0..period);
    let desc = StreamDescriptor::new(offset, period).unwrap();
    let mut samples = Vec::new();
    for &(s, e) in layout {
        let s = desc.ceil_to_grid(s + rng.gen_range(-300..300));
        let e = e + rng.gen_range(-300..300);
        let mut t = samples.last().map_or(s, |&(l, _)| s.max(l + period));
        while t < e {
            if !rng.gen_bool(0.05) {
                samples.push((t, rng.gen_range(-500.0f32..500.0)));
            }
            t += period;
        }
    }
    let data = SourceData::from_samples(desc, &samples).unwrap();
    (SourceSpec::new(name, desc), data)
}

pub fn random_branch(rng: &mut ChaCha8Rng, q: &mut QueryBuilder<f32>, mut s: StreamId, period: i64) -> StreamId {
    let mut p = period;
    for _ in 0..rng.gen_range(0..=3) {
        s = match rng.gen_range(0..11) {
            0 => q.map(s, |x| x * 0.5 + 1.0),
            1 => q.filter(s, |_, x| x[0] > -250.0),
            2 => q.shift(s, p * rng.gen_range(-3..=3)),
            3 => {
                let w = p * rng.gen_range(2..=5);
                let agg = [Agg::Sum, Agg::Max, Agg::Mean, Agg::Count][rng.gen_range(0..4)].clone();
                p = w;
                q.tumbling(s, w, agg)
            }
            4 => {
                let w = p * rng.gen_range(2..=4);
                q.aggregate(s, w, p, Agg::Min)
            }
            5 => q.alter_duration(s, 1),
            6 => toolkit::normalize(q, s, p * rng.gen_range(1..=8)).unwrap(),
            7 => toolkit::fill_const(q, s, p * rng.gen_range(1..=6), 0.0).unwrap(),
            8 => toolkit::fill_mean(q, s, p * rng.gen_range(1..=6)).unwrap(),
            9 => toolkit::pass_filter(q, s, &[0.5, 0.25, 0.25]).unwrap(),
            _ => {
                p = [1, 2, 4, 5, 8, 10][rng.gen_range(0..6)];
                toolkit::resample(q, s, p).unwrap()
            }
        };
    }
    s
}

/// Two or three sources over a shared layout, each through a random branch,
/// joined with modes drawn from `modes`.
pub fn random_query(rng: &mut ChaCha8Rng, modes: &[JoinMode]) -> (QueryBuilder<f32>, StreamId, Vec<SourceData<f32>>) {
    let mut q = QueryBuilder::<f32>::new();
    let n = rng.gen_range(2..=3);
    let layout = random_layout(rng);
    let mut data = Vec::new();
    let mut branches = Vec::new();
    for i in 0..n {
        let (spec, d) = random_source(rng, &format!("s{i}"), &layout);
        let p = spec.descriptor.period;
        let s = q.source(spec);
        branches.push(random_branch(rng, &mut q, s, p));
        data.push(d);
    }
    let mut out = branches[0];
    for &b in &branches[1..] {
        out = q.join_concat(out, b, modes[rng.gen_range(0..modes.len())]);
    }
    (q, out, data)
}
