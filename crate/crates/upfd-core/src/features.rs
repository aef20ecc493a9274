//! Node feature construction: text cleaning, word-vector averaging for
//! endogenous preference embeddings, profile-attribute baseline features,
//! and the binary feature table container.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::PropagationGraph;

#[derive(Error, Debug)]
pub enum FeatureError {
    #[error("word vector file: {0}")]
    WordVectorFormat(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no accessible peers to impute user {0:?} from")]
    EmptyPeerPool(String),
    #[error("negative profile attribute {name} = {value}")]
    NegativeProfileField { name: &'static str, value: f64 },
    #[error("missing feature vectors for users: {0:?}")]
    MissingUserVectors(Vec<String>),
    #[error("dimension mismatch: news vector is {news}-d, user vectors are {user}-d")]
    DimensionMismatch { news: usize, user: usize },
    #[error("bad feature table file {path}: {reason}")]
    BadTableFile { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Profile,
    WordVec,
    External,
}

impl FeatureKind {
    pub fn code(self) -> u8 {
        match self {
            FeatureKind::Profile => 0,
            FeatureKind::WordVec => 1,
            FeatureKind::External => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(FeatureKind::Profile),
            1 => Some(FeatureKind::WordVec),
            2 => Some(FeatureKind::External),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Profile => "profile",
            FeatureKind::WordVec => "wordvec",
            FeatureKind::External => "external",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "profile" => Some(FeatureKind::Profile),
            "wordvec" => Some(FeatureKind::WordVec),
            "external" => Some(FeatureKind::External),
            _ => None,
        }
    }
}

/// Pretrained word vectors: token -> f64 vector, all of one dimension.
#[derive(Debug, Clone)]
pub struct WordVectorTable {
    pub dimension: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dimension);
        self.entries.insert(token.to_lowercase(), vector);
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Text format: first line `DIM <n>`, then `token v1 .. vn` per line.
    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path).map_err(|e| FeatureError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| FeatureError::WordVectorFormat("empty file".into()))?;
        let dim: usize = header
            .strip_prefix("DIM ")
            .and_then(|d| d.trim().parse().ok())
            .ok_or_else(|| {
                FeatureError::WordVectorFormat(format!("bad header line {header:?}"))
            })?;
        let mut table = WordVectorTable::new(dim);
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().unwrap();
            let vector: Vec<f64> = parts.map(|p| p.parse().unwrap_or(f64::NAN)).collect();
            if vector.len() != dim || vector.iter().any(|v| !v.is_finite()) {
                return Err(FeatureError::WordVectorFormat(format!(
                    "line {}: expected {dim} finite values for token {token:?}",
                    lineno + 2
                )));
            }
            table.insert(token, vector);
        }
        Ok(table)
    }
}

/// A user's historical posts (at most 200).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserHistory {
    pub user_id: String,
    pub posts: Vec<String>,
}

pub const MAX_POSTS: usize = 200;

/// Ten numeric profile attributes, in the fixed encoding order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub verified: bool,
    pub followers_count: f64,
    pub friends_count: f64,
    pub statuses_count: f64,
    pub favourites_count: f64,
    pub listed_count: f64,
    pub account_age_days: f64,
    pub name_length: f64,
    pub description_length: f64,
    pub geo_enabled: bool,
}

/// Strip retweet markers, @-mentions and URLs; collapse whitespace;
/// lowercase.
pub fn clean_text(raw: &str) -> String {
    // Compiled per call is fine at this corpus scale.
    let url = Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap();
    let mention = Regex::new(r"@\w+").unwrap();
    let rt = Regex::new(r"(?i)\bRT\b").unwrap();
    let s = url.replace_all(raw, " ");
    let s = mention.replace_all(&s, " ");
    let s = rt.replace_all(&s, " ");
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Mean of table vectors over tokens present in the table. Unknown tokens
/// are skipped; a fully out-of-vocabulary text yields the zero vector.
pub fn embed_text(table: &WordVectorTable, text: &str) -> Vec<f64> {
    let mut sum = vec![0.0; table.dimension];
    let mut hits = 0usize;
    for token in text.split_whitespace() {
        if let Some(v) = table.get(token) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            hits += 1;
        }
    }
    if hits > 0 {
        for s in &mut sum {
            *s /= hits as f64;
        }
    }
    sum
}

/// User preference embedding: clean every post, join with single spaces,
/// embed the combined text.
pub fn encode_user(table: &WordVectorTable, history: &UserHistory) -> Vec<f64> {
    let combined = history
        .posts
        .iter()
        .map(|p| clean_text(p))
        .collect::<Vec<_>>()
        .join(" ");
    embed_text(table, &combined)
}

fn stable_hash(seed: u64, s: &str) -> u64 {
    // FNV-1a over the seed bytes then the string; stable across builds.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in seed.to_le_bytes().iter().chain(s.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Stand-in history for a suspended/deleted account: up to 200 posts
/// sampled with replacement from the pooled posts of accessible peers on
/// the same news item. Deterministic in (rng_seed, user_id).
pub fn impute_inaccessible(
    user_id: &str,
    peers: &[UserHistory],
    rng_seed: u64,
) -> Result<UserHistory, FeatureError> {
    let pool: Vec<&String> = peers.iter().flat_map(|p| p.posts.iter()).collect();
    if pool.is_empty() {
        return Err(FeatureError::EmptyPeerPool(user_id.to_string()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(stable_hash(rng_seed, user_id));
    let posts = (0..MAX_POSTS)
        .map(|_| pool[rng.random_range(0..pool.len())].clone())
        .collect();
    Ok(UserHistory {
        user_id: user_id.to_string(),
        posts,
    })
}

/// Fixed-order 10-d profile vector; count attributes pass through log1p,
/// booleans map to 0/1.
pub fn encode_profile(p: &ProfileRecord) -> Result<Vec<f64>, FeatureError> {
    let counts = [
        ("followers_count", p.followers_count),
        ("friends_count", p.friends_count),
        ("statuses_count", p.statuses_count),
        ("favourites_count", p.favourites_count),
        ("listed_count", p.listed_count),
        ("account_age_days", p.account_age_days),
        ("name_length", p.name_length),
        ("description_length", p.description_length),
    ];
    for (name, value) in counts {
        if value < 0.0 {
            return Err(FeatureError::NegativeProfileField { name, value });
        }
    }
    let mut out = Vec::with_capacity(10);
    out.push(if p.verified { 1.0 } else { 0.0 });
    out.extend(counts.iter().map(|(_, v)| v.ln_1p()));
    out.push(if p.geo_enabled { 1.0 } else { 0.0 });
    Ok(out)
}

/// Dense node-feature matrix for one or more graphs, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub node_count: usize,
    pub dimension: usize,
    pub kind: FeatureKind,
    pub data: Vec<f64>,
}

impl FeatureTable {
    pub fn new(node_count: usize, dimension: usize, kind: FeatureKind) -> Self {
        Self {
            node_count,
            dimension,
            kind,
            data: vec![0.0; node_count * dimension],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Binary layout: magic `UPFD`, u32 LE rows, u32 LE cols, u8 kind
    /// code, then rows*cols f32 LE values. Values are stored at f32
    /// precision and read back exactly.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(b"UPFD")?;
        w.write_all(&(self.node_count as u32).to_le_bytes())?;
        w.write_all(&(self.dimension as u32).to_le_bytes())?;
        w.write_all(&[self.kind.code()])?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from(r: &mut impl Read, path: &str) -> Result<Self, FeatureError> {
        let bad = |reason: &str| FeatureError::BadTableFile {
            path: path.to_string(),
            reason: reason.to_string(),
        };
        let io = |e: std::io::Error| FeatureError::Io {
            path: path.to_string(),
            source: e,
        };
        let mut head = [0u8; 13];
        r.read_exact(&mut head).map_err(io)?;
        if &head[0..4] != b"UPFD" {
            return Err(bad("bad magic"));
        }
        let rows = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let kind = FeatureKind::from_code(head[12]).ok_or_else(|| bad("bad feature kind"))?;
        let mut buf = vec![0u8; rows * cols * 4];
        r.read_exact(&mut buf).map_err(io)?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Self {
            node_count: rows,
            dimension: cols,
            kind,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let mut f = std::fs::File::create(path).map_err(|e| FeatureError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.write_to(&mut f).map_err(|e| FeatureError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let mut f = std::fs::File::open(path).map_err(|e| FeatureError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::read_from(&mut f, &path.display().to_string())
    }
}

/// Stack per-node vectors into one graph's feature table: row 0 is the
/// news text embedding, row i the i-th user's preference embedding.
pub fn assemble_feature_table(
    graph: &PropagationGraph,
    news_vec: &[f64],
    user_vecs: &HashMap<String, Vec<f64>>,
    kind: FeatureKind,
) -> Result<FeatureTable, FeatureError> {
    let dim = news_vec.len();
    let missing: Vec<String> = graph.node_user_ids[1..]
        .iter()
        .filter(|id| !user_vecs.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(FeatureError::MissingUserVectors(missing));
    }
    let mut table = FeatureTable::new(graph.node_count(), dim, kind);
    table.row_mut(0).copy_from_slice(news_vec);
    for (i, uid) in graph.node_user_ids.iter().enumerate().skip(1) {
        let v = &user_vecs[uid];
        if v.len() != dim {
            return Err(FeatureError::DimensionMismatch {
                news: dim,
                user: v.len(),
            });
        }
        table.row_mut(i).copy_from_slice(v);
    }
    Ok(table)
}
