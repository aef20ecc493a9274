//! News propagation tree construction from raw engagement records.
//!
//! Every news item becomes a rooted tree: the news post is node 0 and each
//! retweeting user attaches to exactly one earlier participant. The parent
//! is chosen by two rules, evaluated in order:
//!
//! * R1 — among earlier participants the user follows (source included),
//!   attach to the one with the latest timestamp.
//! * R2 — if the user follows none of them, attach to the earlier
//!   participant with the most followers.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum CascadeError {
    #[error("duplicate user_id {0:?} in engagement records")]
    DuplicateUser(String),
    #[error("user {user:?} retweeted at {t} before publish time {published}")]
    RetweetBeforePublish { user: String, t: i64, published: i64 },
    #[error("non-positive retweet time {t} for user {user:?}")]
    NonPositiveTime { user: String, t: i64 },
}

/// One user's retweet event.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngagementRecord {
    pub user_id: String,
    pub retweet_time: i64,
    pub follower_count: u64,
    pub followee_ids: HashSet<String>,
}

/// The news post itself (tree root).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewsSource {
    pub news_id: String,
    pub source_account_id: String,
    pub source_follower_count: u64,
    pub publish_time: i64,
}

/// Rooted propagation tree. Node 0 is the news post; nodes 1.. are the
/// retweeting users in retweet-time order. Edges point parent -> child.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationGraph {
    pub graph_id: String,
    /// 0 = real, 1 = fake.
    pub label: u8,
    pub node_user_ids: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    /// Publish time for node 0, retweet times for the rest. Optional
    /// because imported containers may not carry timestamps.
    pub node_times: Option<Vec<i64>>,
}

impl PropagationGraph {
    pub fn node_count(&self) -> usize {
        self.node_user_ids.len()
    }

    /// Undirected adjacency lists for message passing.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for &(p, c) in &self.edges {
            adj[p].push(c);
            adj[c].push(p);
        }
        adj
    }
}

/// Per-invariant validation report with tree shape statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeReport {
    pub node_count: usize,
    pub edge_count: usize,
    pub depth: usize,
    pub max_breadth: usize,
    pub single_root: bool,
    pub in_degrees_ok: bool,
    pub connected: bool,
    pub edge_count_ok: bool,
    pub times_monotone: bool,
}

impl TreeReport {
    pub fn passes(&self) -> bool {
        self.single_root
            && self.in_degrees_ok
            && self.connected
            && self.edge_count_ok
            && self.times_monotone
    }
}

/// Build the propagation tree for one news item.
pub fn build_propagation_graph(
    source: &NewsSource,
    records: &[EngagementRecord],
    label: u8,
) -> Result<PropagationGraph, CascadeError> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.user_id.as_str()) {
            return Err(CascadeError::DuplicateUser(r.user_id.clone()));
        }
        if r.retweet_time <= 0 {
            return Err(CascadeError::NonPositiveTime {
                user: r.user_id.clone(),
                t: r.retweet_time,
            });
        }
        if r.retweet_time < source.publish_time {
            return Err(CascadeError::RetweetBeforePublish {
                user: r.user_id.clone(),
                t: r.retweet_time,
                published: source.publish_time,
            });
        }
    }

    // Stable sort: retweet-time order, ties keep input order.
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| records[i].retweet_time);

    // Participants so far, as (node_index, user_id, time, followers).
    let mut node_user_ids = vec![source.source_account_id.clone()];
    let mut times = vec![source.publish_time];
    let mut followers = vec![source.source_follower_count];
    let mut edges = Vec::with_capacity(records.len());

    for &ri in &order {
        let rec = &records[ri];
        let child = node_user_ids.len();
        let parent = choose_parent(rec, &node_user_ids, &times, &followers);
        edges.push((parent, child));
        node_user_ids.push(rec.user_id.clone());
        times.push(rec.retweet_time);
        followers.push(rec.follower_count);
    }

    Ok(PropagationGraph {
        graph_id: source.news_id.clone(),
        label,
        node_user_ids,
        edges,
        node_times: Some(times),
    })
}

/// Parent selection among participants[0..child]. R1 first, R2 fallback.
fn choose_parent(
    rec: &EngagementRecord,
    user_ids: &[String],
    times: &[i64],
    followers: &[u64],
) -> usize {
    // R1: followed earlier participant with the latest timestamp;
    // equal timestamps resolve to the lowest index.
    let followed = (0..user_ids.len())
        .filter(|&i| rec.followee_ids.contains(&user_ids[i]))
        .max_by(|&a, &b| times[a].cmp(&times[b]).then(b.cmp(&a)));
    if let Some(p) = followed {
        return p;
    }
    // R2: earlier participant with the most followers; ties go to the
    // earliest timestamp, then the lowest index.
    (0..user_ids.len())
        .max_by(|&a, &b| {
            followers[a]
                .cmp(&followers[b])
                .then(times[b].cmp(&times[a]))
                .then(b.cmp(&a))
        })
        .expect("participant list always contains the source")
}

/// Check all tree invariants and compute shape statistics.
pub fn validate_tree(g: &PropagationGraph) -> TreeReport {
    let n = g.node_count();
    let mut in_deg = vec![0usize; n];
    let mut valid_ix = true;
    for &(p, c) in &g.edges {
        if p >= n || c >= n {
            valid_ix = false;
            continue;
        }
        in_deg[c] += 1;
    }

    let single_root = valid_ix && n > 0 && in_deg[0] == 0;
    let in_degrees_ok = valid_ix && in_deg.iter().skip(1).all(|&d| d == 1);
    let edge_count_ok = n > 0 && g.edges.len() == n - 1;

    // BFS from the root over directed edges.
    let mut children = vec![Vec::new(); n];
    if valid_ix {
        for &(p, c) in &g.edges {
            children[p].push(c);
        }
    }
    let mut depth_of = vec![usize::MAX; n];
    let mut max_depth = 0;
    let mut reached = 0;
    if n > 0 {
        let mut q = VecDeque::from([0usize]);
        depth_of[0] = 0;
        while let Some(v) = q.pop_front() {
            reached += 1;
            max_depth = max_depth.max(depth_of[v]);
            for &c in &children[v] {
                if depth_of[c] == usize::MAX {
                    depth_of[c] = depth_of[v] + 1;
                    q.push_back(c);
                }
            }
        }
    }
    let connected = reached == n;

    let mut breadth = vec![0usize; max_depth + 1];
    for &d in depth_of.iter().filter(|&&d| d != usize::MAX) {
        breadth[d] += 1;
    }
    let max_breadth = breadth.iter().copied().max().unwrap_or(0);

    let times_monotone = match &g.node_times {
        Some(t) if t.len() == n => g
            .edges
            .iter()
            .filter(|&&(p, c)| p < n && c < n)
            .all(|&(p, c)| t[p] <= t[c]),
        Some(_) => false,
        None => true,
    };

    TreeReport {
        node_count: n,
        edge_count: g.edges.len(),
        depth: max_depth,
        max_breadth,
        single_root,
        in_degrees_ok,
        connected,
        edge_count_ok,
        times_monotone,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, t: i64, followers: u64, follows: &[&str]) -> EngagementRecord {
        EngagementRecord {
            user_id: id.into(),
            retweet_time: t,
            follower_count: followers,
            followee_ids: follows.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn src(followers: u64) -> NewsSource {
        NewsSource {
            news_id: "n1".into(),
            source_account_id: "s".into(),
            source_follower_count: followers,
            publish_time: 0,
        }
    }

    #[test]
    fn r1_latest_followed_participant_wins() {
        let records = [rec("v2", 1, 5, &["s"]), rec("v3", 2, 5, &["s", "v2"])];
        let g = build_propagation_graph(&src(100), &records, 0).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn r2_source_is_only_candidate() {
        let records = [rec("v2", 1, 5, &[])];
        let g = build_propagation_graph(&src(100), &records, 0).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
    }

    #[test]
    fn r2_prefers_max_followers() {
        let records = [rec("v2", 1, 500, &[]), rec("v3", 2, 5, &[])];
        let g = build_propagation_graph(&src(10), &records, 0).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn empty_records_give_root_only_graph() {
        let g = build_propagation_graph(&src(10), &[], 1).unwrap();
        assert_eq!(g.node_count(), 1);
        assert!(g.edges.is_empty());
        let report = validate_tree(&g);
        assert!(report.passes());
        assert_eq!(report.depth, 0);
        assert_eq!(report.edge_count, 0);
    }

    #[test]
    fn duplicate_user_rejected() {
        let records = [rec("v2", 1, 5, &[]), rec("v2", 2, 5, &[])];
        assert!(matches!(
            build_propagation_graph(&src(10), &records, 0),
            Err(CascadeError::DuplicateUser(_))
        ));
    }

    #[test]
    fn retweet_before_publish_rejected() {
        let source = NewsSource {
            publish_time: 100,
            ..src(10)
        };
        let records = [rec("v2", 50, 5, &[])];
        assert!(matches!(
            build_propagation_graph(&source, &records, 0),
            Err(CascadeError::RetweetBeforePublish { .. })
        ));
    }

    #[test]
    fn nodes_kept_in_time_order_with_stable_ties() {
        let records = [
            rec("b", 2, 1, &[]),
            rec("a", 1, 1, &[]),
            rec("c", 2, 1, &[]),
        ];
        let g = build_propagation_graph(&src(10), &records, 0).unwrap();
        assert_eq!(g.node_user_ids, vec!["s", "a", "b", "c"]);
    }

    #[test]
    fn r1_tie_breaks_to_lowest_index() {
        // v2 and v3 share a timestamp; v4 follows both.
        let records = [
            rec("v2", 1, 1, &["s"]),
            rec("v3", 1, 1, &["s"]),
            rec("v4", 2, 1, &["v2", "v3"]),
        ];
        let g = build_propagation_graph(&src(10), &records, 0).unwrap();
        assert_eq!(g.edges[2], (1, 3));
    }

    #[test]
    fn validate_flags_broken_trees() {
        let g = PropagationGraph {
            graph_id: "x".into(),
            label: 0,
            node_user_ids: vec!["a".into(), "b".into(), "c".into()],
            edges: vec![(0, 1)],
            node_times: None,
        };
        let report = validate_tree(&g);
        assert!(!report.passes());
        assert!(!report.connected);
        assert!(!report.edge_count_ok);
    }
}
