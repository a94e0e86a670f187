use pstream::plan::{locality_trace, QueryGraph};
use pstream::toolkit::listing1;
use pstream::{Agg, Error, JoinMode, PlanConfig, QueryBuilder, SourceSpec, StreamDescriptor};

fn desc(o: i64, p: i64) -> StreamDescriptor {
    StreamDescriptor::new(o, p).unwrap()
}

fn adjacent_periods<T: pstream::Scalar>(g: &QueryGraph<T>, n: usize) -> Vec<i64> {
    let node = &g.nodes[n];
    node.inputs
        .iter()
        .chain(&node.outputs)
        .map(|&e| g.edges[e].props.period())
        .collect()
}

#[test]
fn listing1_trace_reaches_common_dimension() {
    let (q, out) = listing1::<f32>().unwrap();
    let plan = q.compile(out).unwrap();
    let log = &plan.trace;
    assert!(
        log.lines
            .first()
            .is_some_and(|l| l.starts_with("sweep 1: Join2") && l.ends_with("set to 10")),
        "{:#?}",
        log.lines
    );
    let g = &plan.graph;
    for e in &g.edges {
        assert_eq!(e.dimension, 100, "{}", e.props.descriptor);
    }
    for n in 0..g.nodes.len() {
        for p in adjacent_periods(g, n) {
            assert_eq!(100 % p, 0);
        }
    }
    let mut again = plan.graph.clone();
    let second = locality_trace(&mut again, 1 << 32).unwrap();
    assert!(second.lines.is_empty());
    assert_eq!(second.sweeps, 1);
    for (a, b) in again.edges.iter().zip(&g.edges) {
        assert_eq!(a.dimension, b.dimension);
    }
}

#[test]
fn listing1_dump_is_stable() {
    let dump = || {
        let (q, out) = listing1::<f32>().unwrap();
        q.compile(out).unwrap().dump()
    };
    let d = dump();
    assert_eq!(d, dump());
    assert!(d.contains("(0,2)[100]"));
    assert!(d.contains("(0,100)[100]"));
    assert!(d.contains("total bytes="));
}

#[test]
fn identity_query_has_one_edge_of_capacity_one() {
    let mut q = QueryBuilder::<f32>::new();
    let s = q.source(SourceSpec::new("s", desc(0, 4)));
    let plan = q.compile(s).unwrap();
    assert_eq!(plan.graph.edges.len(), 1);
    assert_eq!(plan.memory.edges[0].capacity, 1);
    assert_eq!(plan.memory.edges[0].ring_depth, 1);
}

#[test]
fn shifted_select_lineage() {
    let mut q = QueryBuilder::<f32>::new();
    let s = q.source(SourceSpec::new("s", desc(0, 2)));
    let v = q.map(s, |x| x);
    let out = q.shift(v, 6);
    let plan = q.compile(out).unwrap();
    assert_eq!(plan.lineage.source_intervals(100, 200), vec![(0, 94, 194)]);
}

#[test]
fn aggregate_lineage_extends_ahead() {
    let mut q = QueryBuilder::<f32>::new();
    let s = q.source(SourceSpec::new("s", desc(0, 10)));
    let out = q.aggregate(s, 100, 50, Agg::Sum);
    let plan = q.compile(out).unwrap();
    assert_eq!(plan.lineage.source_intervals(0, 50), vec![(0, 0, 100)]);
}

#[test]
fn coprime_periods_overflow_the_cap() {
    let mut q = QueryBuilder::<f32>::new();
    let a = q.source(SourceSpec::new("a", desc(0, 7919)));
    let b = q.source(SourceSpec::new("b", desc(0, 7907)));
    let out = q.join_concat(a, b, JoinMode::Inner);
    let cfg = PlanConfig {
        dimension_cap: 1 << 20,
        ..PlanConfig::default()
    };
    match q.compile_with(out, &cfg) {
        Err(Error::DimensionOverflow { node, periods, .. }) => {
            assert!(node.ends_with("join#2"), "{node}");
            assert!(periods.contains("7919") && periods.contains("7907"), "{periods}");
        }
        other => panic!("expected overflow, got {:?}", other.err()),
    }
}

#[test]
fn memory_budget_is_enforced() {
    let (q, out) = listing1::<f32>().unwrap();
    let cfg = PlanConfig {
        memory_budget: Some(64),
        ..PlanConfig::default()
    };
    assert!(matches!(q.compile_with(out, &cfg), Err(Error::MemoryBudget { .. })));
}

#[test]
fn plan_errors_name_the_path() {
    let mut q = QueryBuilder::<f32>::new();
    let s = q.source(SourceSpec::new("s", desc(0, 3)));
    let out = q.tumbling(s, 10, Agg::Mean);
    match q.compile(out) {
        Err(Error::Plan { path, .. }) => assert!(path.starts_with("s > "), "{path}"),
        other => panic!("{:?}", other.err()),
    }
}

#[test]
fn double_consumption_is_rejected() {
    let mut q = QueryBuilder::<f32>::new();
    let s = q.source(SourceSpec::new("s", desc(0, 2)));
    let out = q.join_concat(s, s, JoinMode::Inner);
    assert!(matches!(q.compile(out), Err(Error::Plan { .. })));
}

#[test]
fn cycles_through_placeholders_are_rejected() {
    let mut q = QueryBuilder::<f32>::new();
    let s = q.source(SourceSpec::new("s", desc(0, 2)));
    let ph = q.placeholder(pstream::EdgeProps::new(desc(0, 2), 1, 2, 2));
    let j = q.join_concat(s, ph, JoinMode::Inner);
    let sel = q.select(j, 1, |_, x, o| o[0] = x[0]);
    let parts = q.multicast(sel, 2);
    q.bind(ph, parts[1]).unwrap();
    match q.compile(parts[0]) {
        Err(Error::Plan { message, .. }) => assert!(message.contains("cycle"), "{message}"),
        other => panic!("{:?}", other.err()),
    }
}
