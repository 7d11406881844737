//! Client communication graph with per-edge direction × period aggregates.

use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;

use crate::model::{CallRecord, Direction, TimeBucket, UserId};
use crate::Merge;

/// Call counters on one undirected edge.
///
/// Directions are relative to the canonical (lexicographically smaller)
/// endpoint. `calls[d][b]` counts calls in direction `d` during bucket `b`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct EdgeStats {
    pub calls: [[u64; 3]; 2],
    pub duration_s: [[u64; 3]; 2],
}

impl EdgeStats {
    pub fn add_call(&mut self, direction: Direction, bucket: TimeBucket, duration_s: u64) {
        self.calls[direction.index()][bucket.index()] += 1;
        self.duration_s[direction.index()][bucket.index()] += duration_s;
    }

    pub fn total_calls(&self) -> u64 {
        self.calls.iter().flatten().sum()
    }

    pub fn total_duration_s(&self) -> u64 {
        self.duration_s.iter().flatten().sum()
    }

    /// Same counters seen from the other endpoint.
    pub fn reversed(&self) -> EdgeStats {
        EdgeStats {
            calls: [self.calls[1], self.calls[0]],
            duration_s: [self.duration_s[1], self.duration_s[0]],
        }
    }

    pub fn calls(&self, direction: Direction, bucket: TimeBucket) -> u64 {
        self.calls[direction.index()][bucket.index()]
    }

    pub fn duration(&self, direction: Direction, bucket: TimeBucket) -> u64 {
        self.duration_s[direction.index()][bucket.index()]
    }
}

impl Merge for EdgeStats {
    fn merge(&mut self, other: Self) {
        for d in 0..2 {
            for b in 0..3 {
                self.calls[d][b] += other.calls[d][b];
                self.duration_s[d][b] += other.duration_s[d][b];
            }
        }
    }
}

fn canonical(a: &UserId, b: &UserId) -> (UserId, UserId, bool) {
    if a <= b {
        (a.clone(), b.clone(), false)
    } else {
        (b.clone(), a.clone(), true)
    }
}

/// Undirected communication graph.
///
/// Every user seen on either side of a record is a node; only users seen as the
/// logged client are clients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommGraph {
    nodes: HashSet<UserId>,
    clients: HashSet<UserId>,
    edges: HashMap<(UserId, UserId), EdgeStats>,
    adjacency: HashMap<UserId, HashSet<UserId>>,
}

impl CommGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_record(&mut self, rec: &CallRecord) {
        debug_assert_ne!(rec.caller, rec.callee);
        self.nodes.insert(rec.caller.clone());
        self.nodes.insert(rec.callee.clone());
        self.clients.insert(rec.caller.clone());
        let (a, b, flipped) = canonical(&rec.caller, &rec.callee);
        let direction = if flipped {
            rec.direction.reversed()
        } else {
            rec.direction
        };
        let stats = self.edges.entry((a, b)).or_insert_with(|| {
            self.adjacency
                .entry(rec.caller.clone())
                .or_default()
                .insert(rec.callee.clone());
            self.adjacency
                .entry(rec.callee.clone())
                .or_default()
                .insert(rec.caller.clone());
            EdgeStats::default()
        });
        stats.add_call(direction, rec.bucket(), rec.duration_s);
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_node(&self, u: &str) -> bool {
        self.nodes.contains(u)
    }

    pub fn is_client(&self, u: &str) -> bool {
        self.clients.contains(u)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &UserId> {
        self.nodes.iter()
    }

    pub fn clients(&self) -> impl Iterator<Item = &UserId> {
        self.clients.iter()
    }

    /// Neighbor set of `u`; empty for unknown users.
    pub fn neighbors(&self, u: &str) -> BTreeSet<UserId> {
        self.neighbor_iter(u).cloned().collect()
    }

    /// Unordered neighbor iteration without allocation.
    pub fn neighbor_iter<'a>(&'a self, u: &str) -> impl Iterator<Item = &'a UserId> + 'a {
        self.adjacency.get(u).into_iter().flatten()
    }

    pub fn degree(&self, u: &str) -> usize {
        self.adjacency.get(u).map_or(0, HashSet::len)
    }

    /// Edge counters oriented so that directions are relative to `u`.
    pub fn edge_from(&self, u: &UserId, v: &UserId) -> Option<EdgeStats> {
        let (a, b, flipped) = canonical(u, v);
        self.edges.get(&(a, b)).map(|s| if flipped { s.reversed() } else { *s })
    }

    /// Edges in canonical order, sorted.
    pub fn sorted_edges(&self) -> Vec<(&UserId, &UserId, &EdgeStats)> {
        let mut out: Vec<_> = self.edges.iter().map(|((a, b), s)| (a, b, s)).collect();
        out.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        out
    }

    pub fn edges(&self) -> impl Iterator<Item = (&UserId, &UserId, &EdgeStats)> {
        self.edges.iter().map(|((a, b), s)| (a, b, s))
    }

    /// Debug dump: `user_a,user_b,calls_total,duration_total_s`.
    pub fn edge_list_csv(&self) -> String {
        let mut out = String::from("user_a,user_b,calls_total,duration_total_s\n");
        for (a, b, s) in self.sorted_edges() {
            out.push_str(&format!("{a},{b},{},{}\n", s.total_calls(), s.total_duration_s()));
        }
        out
    }
}

impl Merge for CommGraph {
    fn merge(&mut self, other: Self) {
        self.nodes.extend(other.nodes);
        self.clients.extend(other.clients);
        for (key, stats) in other.edges {
            self.edges.entry(key).or_default().merge(stats);
        }
        for (u, vs) in other.adjacency {
            self.adjacency.entry(u).or_default().extend(vs);
        }
    }
}

pub fn build_graph<'a, I>(records: I) -> CommGraph
where
    I: IntoIterator<Item = &'a CallRecord>,
{
    let mut g = CommGraph::new();
    for rec in records {
        g.add_record(rec);
    }
    g
}

pub fn merge(mut g1: CommGraph, g2: CommGraph) -> CommGraph {
    g1.merge(g2);
    g1
}

/// Builds shards in parallel and merges them. Equal to [`build_graph`].
pub fn build_graph_parallel(records: &[CallRecord], shard_len: usize) -> CommGraph {
    records
        .par_chunks(shard_len.max(1))
        .map(build_graph)
        .reduce(CommGraph::new, merge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_timestamp, AntennaId};

    fn rec(caller: &str, callee: &str, ts: &str, dir: Direction, dur: u64) -> CallRecord {
        CallRecord {
            caller: caller.into(),
            callee: callee.into(),
            timestamp: parse_timestamp(ts).unwrap(),
            direction: dir,
            antenna: AntennaId::new("A"),
            duration_s: dur,
        }
    }

    #[test]
    fn empty_input() {
        let g = build_graph(&[]);
        assert_eq!(g.node_count(), 0);
        assert_eq!(g.edge_count(), 0);
        assert!(g.neighbors("u1").is_empty());
    }

    #[test]
    fn two_record_fixture() {
        // Monday 09:00 weekday, Saturday 12:00 weekend.
        let recs = [
            rec("u1", "u2", "2015-08-03T09:00:00Z", Direction::Outgoing, 10),
            rec("u2", "u1", "2015-08-08T12:00:00Z", Direction::Outgoing, 20),
        ];
        let g = build_graph(&recs);
        assert_eq!(g.edge_count(), 1);
        let s = g.edge_from(&"u1".into(), &"u2".into()).unwrap();
        assert_eq!(s.total_calls(), 2);
        assert_eq!(s.calls.iter().map(|d| d[TimeBucket::Weekday.index()]).sum::<u64>(), 1);
        assert_eq!(s.calls.iter().map(|d| d[TimeBucket::Weekend.index()]).sum::<u64>(), 1);
        // u2's outgoing call is incoming from u1's point of view.
        assert_eq!(s.calls(Direction::Outgoing, TimeBucket::Weekday), 1);
        assert_eq!(s.calls(Direction::Incoming, TimeBucket::Weekend), 1);
        let r = g.edge_from(&"u2".into(), &"u1".into()).unwrap();
        assert_eq!(r.calls(Direction::Outgoing, TimeBucket::Weekend), 1);
        assert_eq!(r.duration(Direction::Outgoing, TimeBucket::Weekend), 20);
        assert_eq!(
            g.edge_list_csv(),
            "user_a,user_b,calls_total,duration_total_s\nu1,u2,2,30\n"
        );
    }

    #[test]
    fn star_and_isolated() {
        let mut recs: Vec<_> = (1..=5)
            .map(|i| rec("c", &format!("l{i}"), "2015-08-03T09:00:00Z", Direction::Outgoing, 1))
            .collect();
        recs.push(rec("x", "y", "2015-08-03T09:00:00Z", Direction::Outgoing, 1));
        let g = build_graph(&recs);
        let leaves: BTreeSet<UserId> = (1..=5).map(|i| UserId::new(format!("l{i}"))).collect();
        assert_eq!(g.neighbors("c"), leaves);
        assert!(g.neighbors("nobody").is_empty());
        assert!(g.is_client("c"));
        assert!(!g.is_client("l1"));
        assert!(g.contains_node("l1"));
    }

    #[test]
    fn merge_identity() {
        let recs = [rec("a", "b", "2015-08-03T09:00:00Z", Direction::Incoming, 3)];
        let g = build_graph(&recs);
        assert_eq!(merge(g.clone(), CommGraph::new()), g);
        assert_eq!(merge(CommGraph::new(), g.clone()), g);
    }
}
