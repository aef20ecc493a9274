//! Fake-news detection over social propagation trees.
//!
//! The pipeline: raw retweet engagement records become a rooted
//! propagation tree per news item (`cascade`); user historical posts and
//! profile attributes become node feature vectors (`features`); a small
//! hand-differentiated GNN encodes each tree, pools it, optionally fuses
//! the news text embedding, and classifies it (`model`, on top of
//! `autodiff`); `train` runs the multi-seed protocol with ablations; and
//! `dataio` holds the offline dataset container plus a planted-signal
//! synthetic generator for end-to-end verification without external data.

pub mod autodiff;
pub mod cascade;
pub mod dataio;
pub mod features;
pub mod model;
pub mod train;
