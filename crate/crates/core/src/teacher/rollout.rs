//! Offline dataset of teacher decisions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TeacherPolicy;
use crate::agent::episode_setup;
use crate::netsim::{ConfigRanges, Env, EnvConfig, NetworkConfig, RETURN_SCALE};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub episode: usize,
    pub mi: usize,
    pub network: NetworkConfig,
    /// Scaled return of the whole episode the sample belongs to.
    pub episode_return: f64,
}

/// MI-aligned observations and teacher actions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutDataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub meta: Vec<SampleMeta>,
}

const META_COLUMNS: [&str; 8] = [
    "action", "episode", "mi", "return", "bandwidth", "latency", "queue", "loss",
];

impl RolloutDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Number of distinct episodes, assuming ids are contiguous from 0.
    pub fn episodes(&self) -> usize {
        self.meta.iter().map(|m| m.episode + 1).max().unwrap_or(0)
    }

    /// Rows whose episode satisfies `keep`, in original order.
    pub fn filter_episodes(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut out = Self::default();
        for i in 0..self.len() {
            if keep(self.meta[i].episode) {
                out.x.push(self.x[i].clone());
                out.y.push(self.y[i]);
                out.meta.push(self.meta[i]);
            }
        }
        out
    }

    /// Splits by episode: the last `holdout` episodes form the second part.
    pub fn split_holdout(&self, holdout: usize) -> (Self, Self) {
        let cut = self.episodes().saturating_sub(holdout);
        (
            self.filter_episodes(|e| e < cut),
            self.filter_episodes(|e| e >= cut),
        )
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let dim = self.feature_dim();
        let mut header: Vec<String> = (0..dim).map(|i| format!("obs_{i}")).collect();
        header.extend(META_COLUMNS.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let m = &self.meta[i];
            let mut row: Vec<String> = self.x[i].iter().map(|v| v.to_string()).collect();
            row.push(self.y[i].to_string());
            row.push(m.episode.to_string());
            row.push(m.mi.to_string());
            row.push(m.episode_return.to_string());
            row.push(m.network.bandwidth.to_string());
            row.push(m.network.latency.to_string());
            row.push(m.network.queue_size.to_string());
            row.push(m.network.loss_rate.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV form. The trailing link columns are optional.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let dim = header.iter().take_while(|h| h.starts_with("obs_")).count();
        let col = |name: &str| header.iter().position(|h| h == name);
        let need = |name: &str| {
            col(name).ok_or_else(|| Error::Format(format!("missing column `{name}`")))
        };
        let (c_action, c_episode, c_mi, c_return) =
            (need("action")?, need("episode")?, need("mi")?, need("return")?);
        let link = [col("bandwidth"), col("latency"), col("queue"), col("loss")];
        let mut out = Self::default();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let num = |c: usize| -> Result<f64> {
                record
                    .get(c)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Format(format!("row {}: bad value in column {c}", line + 2)))
            };
            let x = (0..dim).map(num).collect::<Result<Vec<_>>>()?;
            let mut network = NetworkConfig {
                bandwidth: 0.0,
                latency: 0.0,
                queue_size: 0,
                loss_rate: 0.0,
            };
            if let [Some(b), Some(l), Some(q), Some(p)] = link {
                network = NetworkConfig {
                    bandwidth: num(b)?,
                    latency: num(l)?,
                    queue_size: num(q)? as u32,
                    loss_rate: num(p)?,
                };
            }
            out.x.push(x);
            out.y.push(num(c_action)?);
            out.meta.push(SampleMeta {
                episode: num(c_episode)? as usize,
                mi: num(c_mi)? as usize,
                network,
                episode_return: num(c_return)?,
            });
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(BufReader::new(File::open(path)?))
    }
}

/// Runs `n_episodes` seeded episodes with deterministic teacher actions and
/// records every MI.
pub fn collect_rollouts(
    policy: &TeacherPolicy,
    ranges: &ConfigRanges,
    env_config: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<RolloutDataset> {
    ranges.validate()?;
    let episodes: Vec<RolloutDataset> = (0..n_episodes)
        .into_par_iter()
        .map(|e| {
            let (network, env_seed) = episode_setup(ranges, seed, e as u64);
            let mut env = Env::new(network, env_config.clone(), env_seed)?;
            let mut part = RolloutDataset::default();
            let mut total = 0.0;
            while !env.is_done() {
                let features = env.observation().features().to_vec();
                let action = policy.act_features(&features);
                total += env.step(action)?.reward;
                part.meta.push(SampleMeta {
                    episode: e,
                    mi: part.x.len(),
                    network,
                    episode_return: 0.0,
                });
                part.x.push(features);
                part.y.push(action);
            }
            for m in &mut part.meta {
                m.episode_return = total * RETURN_SCALE;
            }
            Ok(part)
        })
        .collect::<Result<_>>()?;
    let mut out = RolloutDataset::default();
    for part in episodes {
        out.x.extend(part.x);
        out.y.extend(part.y);
        out.meta.extend(part.meta);
    }
    Ok(out)
}
